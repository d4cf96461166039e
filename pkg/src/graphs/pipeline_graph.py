from langgraph.graph import END, StateGraph

from src.graphs.states import PipelineState
from src.nodes.evaluation_nodes import Evaluator
from src.nodes.fusion_nodes import FusionProcessor
from src.nodes.persistence_nodes import DataPersistence
from src.nodes.simulation_nodes import ScenarioSimulation

# Node sequence per run mode
ROUTES = {
    "simulate": ["simulate_scenario", "save_log"],
    "fuse": ["load_log", "synchronize", "run_filter", "save_fused_log"],
    "eval": ["load_log", "synchronize", "evaluate", "save_reports"],
    "replica": ["simulate_scenario", "synchronize", "run_filter", "evaluate"],
}


def _route(state: PipelineState) -> list:
    route = list(ROUTES[state["mode"]])
    # replicas only touch the disk when asked to keep their files
    if state["mode"] == "replica" and state.get("output_path"):
        route.append("save_replica")
    return route


def route_entry(state: PipelineState) -> str:
    """First node of the run mode"""
    if state.get("mode") not in ROUTES:
        return "end"
    return _route(state)[0]


def make_router(node: str):
    """After `node`: stop on any error, otherwise go to the mode's next node"""
    def router(state: PipelineState) -> str:
        if state.get("errors"):
            return "end"
        route = _route(state)
        position = route.index(node)
        return route[position + 1] if position + 1 < len(route) else "end"
    return router


def build_localization_graph() -> StateGraph:
    """Compile the simulate / fuse / eval / replica pipeline"""
    simulation = ScenarioSimulation()
    fusion = FusionProcessor()
    evaluator = Evaluator()
    persistence = DataPersistence()

    workflow = StateGraph(PipelineState)

    nodes = {
        "simulate_scenario": simulation.simulate_scenario,
        "load_log": persistence.load_log,
        "synchronize": fusion.synchronize,
        "run_filter": fusion.run_filter,
        "evaluate": evaluator.evaluate,
        "save_log": persistence.save_log,
        "save_fused_log": persistence.save_fused_log,
        "save_reports": persistence.save_reports,
        "save_replica": persistence.save_replica,
    }
    for name, func in nodes.items():
        workflow.add_node(name, func)

    targets = {name: name for name in nodes}
    targets["end"] = END

    workflow.set_conditional_entry_point(route_entry, targets)
    for name in nodes:
        workflow.add_conditional_edges(name, make_router(name), targets)

    return workflow.compile()
