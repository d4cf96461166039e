"""
Localization services: noise models, filter, association, simulation, logs and metrics
"""

from src.services.data_association import StreamSynchronizer, synchronize_streams
from src.services.ekf_filter import LocalizationFilter, fuse_epoch
from src.services.log_service import LogData, read_log, write_log
from src.services.metrics_service import compare_report, position_errors, summarize

__all__ = [
    "StreamSynchronizer",
    "synchronize_streams",
    "LocalizationFilter",
    "fuse_epoch",
    "LogData",
    "read_log",
    "write_log",
    "compare_report",
    "position_errors",
    "summarize",
]
