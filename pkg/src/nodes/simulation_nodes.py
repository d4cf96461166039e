"""
Scenario generation node
"""

from src.exceptions import InvalidInputError
from src.graphs.states import PipelineState
from src.nodes.stage import pipeline_stage
from src.services.log_service import LogData, records_from_scenario
from src.services.scenario_simulator import simulate_scenario
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


class ScenarioSimulation:
    """Produces ground truth and sensor streams from the scenario in the state"""

    @pipeline_stage("simulate")
    def simulate_scenario(self, state: PipelineState) -> PipelineState:
        scenario = state.get("scenario")
        if scenario is None:
            raise InvalidInputError("no scenario to simulate")

        truth, streams = simulate_scenario(scenario, state["params"])
        state["truth"] = truth
        state["streams"] = streams

        # Log records are only needed when something gets written
        if state["mode"] == "simulate" or state.get("output_path"):
            state["log"] = LogData(records=records_from_scenario(truth, streams, state["params"]))

        state["processing_log"].append(
            f"simulated seed {scenario.seed}: {len(streams.gps)} GPS ticks, {len(streams.ix)} ix frames"
        )
        return state
