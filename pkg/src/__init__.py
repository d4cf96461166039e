"""
ix-localization
GPS / IMU / infrastructure-node fusion for vehicle localization, built on LangGraph
"""

__version__ = "0.1.0"
