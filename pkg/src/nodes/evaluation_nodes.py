"""
Evaluation node: errors of GPS, ix-only, fused and (optionally) GPS+IMU estimates
"""

from typing import List

import numpy as np

from src.config import Config
from src.exceptions import InvalidInputError
from src.graphs.states import PipelineState
from src.models import EstimateSeries, FusionEpochResult
from src.nodes.stage import pipeline_stage
from src.services.ekf_filter import JOSEPH, LocalizationFilter
from src.services.metrics_service import (
    FUSION,
    GPS_IMU,
    compare_report,
    detection_windows,
    gps_estimates,
    histogram,
    ix_only_estimates,
    position_errors,
    trajectory_error_table,
)
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


def estimates_from_results(results: List[FusionEpochResult], source: str) -> EstimateSeries:
    return EstimateSeries(
        source=source,
        t=np.array([r.final.t for r in results], dtype=float),
        pos=np.array([[r.final.pos.x, r.final.pos.y] for r in results], dtype=float).reshape(-1, 2),
    )


class Evaluator:
    """Builds the comparison report, error traces and histograms"""

    def _fused(self, state: PipelineState) -> EstimateSeries:
        log = state.get("log")
        if state.get("results"):
            return estimates_from_results(state["results"], FUSION)
        if log is not None:
            logged = log.estimates(FUSION)
            if logged is not None:
                return logged

        logger.warning("no fused estimates available, running the filter for evaluation")
        fusion = LocalizationFilter(state["params"], use_ix=True, form=state.get("form", JOSEPH))
        state["results"] = fusion.run(state["epochs"])
        state["filter_stats"] = fusion.stats.to_dict()
        return estimates_from_results(state["results"], FUSION)

    def _baseline(self, state: PipelineState) -> EstimateSeries:
        if not state.get("baseline_results"):
            coasting = LocalizationFilter(state["params"], use_ix=False, form=state.get("form", JOSEPH))
            state["baseline_results"] = coasting.run(state["epochs"])
        return estimates_from_results(state["baseline_results"], GPS_IMU)

    @pipeline_stage("evaluate")
    def evaluate(self, state: PipelineState) -> PipelineState:
        params = state["params"]
        truth = state.get("truth")
        if truth is None and state.get("log") is not None:
            truth = state["log"].ground_truth(params)
            state["truth"] = truth
        if truth is None or len(truth) < 2:
            raise InvalidInputError("evaluation needs at least two ground-truth (GT) records")

        fused = self._fused(state)
        gps = gps_estimates(state["streams"])
        ix = ix_only_estimates(state["epochs"], fused, params)
        extra = [self._baseline(state)] if state.get("baseline") else []

        windows = detection_windows(truth, params)
        if not windows:
            logger.warning("the vehicle never comes within detection range of the node")
        state["report"] = compare_report(gps, ix, fused, truth, windows, extra=extra)

        bin_width = state.get("hist_bin_width", Config.HIST_BIN_WIDTH)
        series = {s.source: position_errors(s, truth) for s in (gps, ix, fused, *extra)}
        state["error_series"] = series
        state["histograms"] = {name: histogram(s, bin_width) for name, s in series.items()}
        if len(series[gps.source]):
            state["gps_table"] = trajectory_error_table(series[gps.source])

        state["processing_log"].append(
            f"evaluated {len(windows)} case windows over sources {', '.join(series)}"
        )
        return state
