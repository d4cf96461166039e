"""
Log and report persistence nodes
"""

from pathlib import Path

from src.config import Config
from src.exceptions import InvalidInputError
from src.graphs.states import PipelineState
from src.nodes.stage import pipeline_stage
from src.services.log_service import (
    LogData,
    merge_estimates,
    metadata_path,
    read_log,
    records_from_scenario,
    write_diagnostics,
    write_log,
    write_metadata,
)
from src.services.metrics_service import (
    error_trace_frame,
    format_report_table,
    write_histogram_csv,
    write_report_csv,
)
from src.services.scenario_simulator import prng_metadata
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

REPORT_FILE = "report.csv"
REPORT_TABLE_FILE = "report.txt"
HISTOGRAM_FILE = "histogram.csv"
ERROR_TRACE_FILE = "errors.csv"
GPS_TABLE_FILE = "gps_entire_trajectory.csv"
REPLICA_LOG_FILE = "fused_log.csv"


class DataPersistence:
    """Reads input logs and writes logs / reports; every written path is recorded in state["outputs"]"""

    def _target(self, state: PipelineState, path) -> Path:
        path = Path(path)
        state["outputs"].append(str(path))
        return path

    @staticmethod
    def _output(state: PipelineState) -> Path:
        if not state.get("output_path"):
            raise InvalidInputError("no output path given")
        return Path(state["output_path"])

    @pipeline_stage("load_log")
    def load_log(self, state: PipelineState) -> PipelineState:
        if not state.get("input_path"):
            raise InvalidInputError("no input log given")
        state["log"] = read_log(state["input_path"], state["params"])
        state["processing_log"].append(f"loaded {len(state['log'].records)} records from {state['input_path']}")
        return state

    @pipeline_stage("save_log")
    def save_log(self, state: PipelineState) -> PipelineState:
        output = self._output(state)
        write_log(state["log"].records, self._target(state, output), state["params"])
        if state.get("scenario") is not None:
            self._target(state, metadata_path(output))
            write_metadata(output, prng_metadata(state["scenario"]))
        state["processing_log"].append(f"log written to {output}")
        return state

    @pipeline_stage("save_fused_log")
    def save_fused_log(self, state: PipelineState) -> PipelineState:
        output = self._output(state)
        records = merge_estimates(state["log"], state["results"])
        write_log(records, self._target(state, output), state["params"])
        if state.get("diag"):
            write_diagnostics(state["results"], self._target(state, f"{output}.diag.csv"))
        state["processing_log"].append(f"fused log written to {output}")
        return state

    def _write_reports(self, state: PipelineState, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        report = state["report"]
        write_report_csv(report, self._target(state, directory / REPORT_FILE))
        table = self._target(state, directory / REPORT_TABLE_FILE)
        table.write_text(format_report_table(report) + "\n", encoding="utf-8")
        write_histogram_csv(state["histograms"], self._target(state, directory / HISTOGRAM_FILE))

        window = state.get("rms_window", Config.RMS_WINDOW)
        traces = error_trace_frame(state["error_series"], window)
        traces.to_csv(self._target(state, directory / ERROR_TRACE_FILE), index=False,
                      lineterminator="\n", float_format="%.17g")
        if state.get("gps_table") is not None:
            state["gps_table"].to_csv(self._target(state, directory / GPS_TABLE_FILE), index=False,
                                      lineterminator="\n", float_format="%.17g")

    @pipeline_stage("save_reports")
    def save_reports(self, state: PipelineState) -> PipelineState:
        directory = self._output(state)
        self._write_reports(state, directory)
        state["processing_log"].append(f"reports written to {directory}")
        return state

    @pipeline_stage("save_replica")
    def save_replica(self, state: PipelineState) -> PipelineState:
        directory = self._output(state)
        self._write_reports(state, directory)
        log = state.get("log") or LogData(records=records_from_scenario(state["truth"], state["streams"], state["params"]))
        write_log(merge_estimates(log, state["results"]), self._target(state, directory / REPLICA_LOG_FILE),
                  state["params"])
        state["processing_log"].append(f"replica files written to {directory}")
        return state
