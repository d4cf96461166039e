"""
Pipeline node implementations
"""

from src.nodes.evaluation_nodes import Evaluator
from src.nodes.fusion_nodes import FusionProcessor
from src.nodes.persistence_nodes import DataPersistence
from src.nodes.simulation_nodes import ScenarioSimulation

__all__ = [
    "Evaluator",
    "FusionProcessor",
    "DataPersistence",
    "ScenarioSimulation",
]
