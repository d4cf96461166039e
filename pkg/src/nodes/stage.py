"""
Error capture shared by all pipeline nodes
"""

import functools
from typing import Callable

from src.graphs.states import PipelineState
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


def pipeline_stage(name: str) -> Callable:
    """Run a node; on failure record the stage and the exception in the state instead of raising"""
    def decorator(func: Callable[..., PipelineState]) -> Callable[..., PipelineState]:
        @functools.wraps(func)
        def wrapper(self, state: PipelineState) -> PipelineState:
            try:
                return func(self, state)
            except Exception as e:
                logger.error(f"stage {name} failed: {type(e).__name__}: {e}")
                state["errors"].append(f"{name}: {e}")
                state["failed_stage"] = name
                state["exception"] = e
                return state
        return wrapper
    return decorator
