"""
LangGraph pipeline for simulation, fusion and evaluation runs.

The compiled graph lives in src.graphs.pipeline_graph; it is not imported
here because the nodes import the state definition from this package.
"""

from src.graphs.states import PipelineState

__all__ = ["PipelineState"]
