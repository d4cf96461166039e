"""
Synchronization and filtering nodes
"""

from src.exceptions import InvalidInputError
from src.graphs.states import PipelineState
from src.nodes.stage import pipeline_stage
from src.services.data_association import synchronize_streams
from src.services.ekf_filter import JOSEPH, LocalizationFilter
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


class FusionProcessor:
    """Aligns the sensor streams to the GPS clock and runs the filter over them"""

    @pipeline_stage("synchronize")
    def synchronize(self, state: PipelineState) -> PipelineState:
        streams = state.get("streams")
        if streams is None:
            log = state.get("log")
            if log is None:
                raise InvalidInputError("no sensor streams to synchronize")
            streams = log.sensor_streams()
            state["streams"] = streams

        state["epochs"] = synchronize_streams(streams.gps, streams.imu, streams.ix, state["params"])
        state["processing_log"].append(f"synchronized {len(state['epochs'])} epochs")
        return state

    @pipeline_stage("fuse")
    def run_filter(self, state: PipelineState) -> PipelineState:
        epochs = state.get("epochs", [])
        if not epochs:
            raise InvalidInputError("no synchronized epochs to fuse")

        form = state.get("form", JOSEPH)
        fusion = LocalizationFilter(state["params"], use_ix=True, form=form)
        state["results"] = fusion.run(epochs)
        state["filter_stats"] = fusion.stats.to_dict()

        if state.get("baseline"):
            coasting = LocalizationFilter(state["params"], use_ix=False, form=form)
            state["baseline_results"] = coasting.run(epochs)

        if not state["results"]:
            raise InvalidInputError("the GPS stream has no fix to initialize the filter")

        state["processing_log"].append(
            f"fused {len(state['results'])} epochs, "
            f"GPS rejected {fusion.stats.gps_rejected}, ix used {fusion.stats.ix_used}"
        )
        return state
