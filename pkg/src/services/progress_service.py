"""
Progress tracking for pipeline stages and Monte-Carlo batches
"""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from src.utils.logger import setup_logger

logger = setup_logger(__name__)


class ProgressStage(str, Enum):
    REPLICAS = "replicas"
    REPORTING = "reporting"
    COMPLETION = "completion"


@dataclass
class ProgressInfo:
    """Snapshot of one stage"""
    stage: ProgressStage
    current: int
    total: int
    message: str = ""
    start_time: float = 0.0
    elapsed_time: float = 0.0
    estimated_remaining: float = 0.0
    percentage: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.refresh()

    def refresh(self):
        if self.total > 0:
            self.percentage = round((self.current / self.total) * 100, 2)
        if self.start_time > 0:
            self.elapsed_time = time.time() - self.start_time
            if self.current > 0 and self.total > self.current and self.elapsed_time > 0:
                rate = self.current / self.elapsed_time
                self.estimated_remaining = (self.total - self.current) / rate


class ProgressTracker:
    """Tracks the stages of one run and forwards every update to callbacks"""

    def __init__(self, session_id: str, total_stages: int = 1):
        self.session_id = session_id
        self.total_stages = total_stages
        self.current_stage = 0
        self.stages_progress: Dict[ProgressStage, ProgressInfo] = {}
        self.callbacks: List[Callable[[ProgressInfo], None]] = []
        self.session_start_time = time.time()
        self.is_completed = False

    def add_callback(self, callback: Callable[[ProgressInfo], None]):
        self.callbacks.append(callback)

    def start_stage(self, stage: ProgressStage, total_items: int, message: str = ""):
        self.current_stage += 1
        progress = ProgressInfo(
            stage=stage,
            current=0,
            total=total_items,
            message=message,
            start_time=time.time(),
            metadata={
                "stage_number": self.current_stage,
                "total_stages": self.total_stages,
                "session_id": self.session_id,
            },
        )
        self.stages_progress[stage] = progress
        self._notify_callbacks(progress)
        logger.info(f"[{self.session_id}] stage {stage.value} started: {message} ({total_items} items)")

    def update_progress(self, stage: ProgressStage, current: int, message: str = "",
                        metadata: Optional[Dict[str, Any]] = None):
        if stage not in self.stages_progress:
            logger.warning(f"stage {stage.value} was never started, starting it now")
            self.start_stage(stage, current, message)
            return

        progress = self.stages_progress[stage]
        progress.current = current
        if message:
            progress.message = message
        if metadata:
            progress.metadata.update(metadata)
        progress.refresh()
        self._notify_callbacks(progress)

        # log every 10%
        if current % max(1, progress.total // 10) == 0:
            logger.info(f"[{self.session_id}] {stage.value}: {current}/{progress.total} ({progress.percentage}%)")

    def batch_callback(self, stage: ProgressStage) -> Callable[[int, int, str], None]:
        """Callback in the (current, total, message) form used by the batch processor"""
        def callback(current: int, total: int, message: str = ""):
            if stage not in self.stages_progress:
                self.start_stage(stage, total, message)
            self.update_progress(stage, current, message)
        return callback

    def complete_stage(self, stage: ProgressStage, message: str = "done"):
        if stage in self.stages_progress:
            progress = self.stages_progress[stage]
            progress.current = progress.total
            progress.message = message
            progress.refresh()
            logger.info(f"[{self.session_id}] stage {stage.value} finished in {progress.elapsed_time:.2f}s")
            self._notify_callbacks(progress)

    def set_error(self, stage: ProgressStage, error_message: str):
        progress = self.stages_progress.get(stage)
        if progress is None:
            self.start_stage(stage, 0)
            progress = self.stages_progress[stage]
        progress.message = f"error: {error_message}"
        progress.metadata["error"] = True
        progress.metadata["error_message"] = error_message
        self._notify_callbacks(progress)
        logger.error(f"[{self.session_id}] stage {stage.value} failed: {error_message}")

    def complete_session(self, final_message: str = "finished"):
        self.is_completed = True
        total_time = time.time() - self.session_start_time
        completion = ProgressInfo(
            stage=ProgressStage.COMPLETION,
            current=self.total_stages,
            total=self.total_stages,
            message=final_message,
            start_time=self.session_start_time,
            metadata={"session_completed": True, "total_time": total_time,
                      "stages_completed": len(self.stages_progress)},
        )
        self._notify_callbacks(completion)
        logger.info(f"[{self.session_id}] finished in {total_time:.2f}s")

    def _notify_callbacks(self, progress: ProgressInfo):
        for callback in self.callbacks:
            try:
                callback(replace(progress, metadata=dict(progress.metadata)))
            except Exception as e:
                logger.error(f"progress callback failed: {e}")
