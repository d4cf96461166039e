from typing import Any, Dict, List, Optional, TypedDict

from src.models import (
    ComparisonReport,
    ErrorSeries,
    FusionEpochResult,
    HistogramBins,
    NoiseParams,
    RawEpoch,
    ScenarioSpec,
    SensorStreams,
    Trajectory,
)
from src.services.log_service import LogData


class PipelineState(TypedDict, total=False):
    """Graph state of one localization run"""
    # input
    mode: str
    params: NoiseParams
    scenario: Optional[ScenarioSpec]
    input_path: Optional[str]
    output_path: Optional[str]
    diag: bool
    form: str
    baseline: bool
    hist_bin_width: float
    rms_window: float

    # data
    log: Optional[LogData]
    truth: Optional[Trajectory]
    streams: Optional[SensorStreams]
    epochs: List[RawEpoch]
    results: List[FusionEpochResult]
    baseline_results: List[FusionEpochResult]
    filter_stats: Dict[str, Any]

    # evaluation
    report: Optional[ComparisonReport]
    error_series: Dict[str, ErrorSeries]
    histograms: Dict[str, HistogramBins]
    gps_table: Optional[Any]

    # errors and log
    outputs: List[str]
    errors: List[str]
    processing_log: List[str]
    failed_stage: Optional[str]
    exception: Optional[BaseException]
