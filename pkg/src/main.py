import logging
from functools import lru_cache, partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config import Config
from src.exceptions import PipelineError
from src.graphs.pipeline_graph import build_localization_graph
from src.graphs.states import PipelineState
from src.models import NoiseParams, ScenarioSpec
from src.services.batch_processor import ReplicaBatchProcessor
from src.services.ekf_filter import JOSEPH
from src.services.progress_service import ProgressInfo, ProgressStage, ProgressTracker
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

REPLICAS_FILE = "replicas.csv"
AGGREGATE_FILE = "aggregate.csv"


class LocalizationSystem:
    """Entry point for simulation, fusion, evaluation and Monte-Carlo runs"""

    def __init__(self, params: NoiseParams, form: str = JOSEPH):
        Config.log_config_status()
        self.params = params
        self.form = form
        self.graph = build_localization_graph()
        logger.info("LocalizationSystem ready")

    def _initial_state(self, mode: str, **kwargs) -> PipelineState:
        state: PipelineState = {
            "mode": mode,
            "params": self.params,
            "scenario": None,
            "input_path": None,
            "output_path": None,
            "diag": False,
            "form": self.form,
            "baseline": False,
            "hist_bin_width": Config.HIST_BIN_WIDTH,
            "rms_window": Config.RMS_WINDOW,
            "log": None,
            "truth": None,
            "streams": None,
            "epochs": [],
            "results": [],
            "baseline_results": [],
            "filter_stats": {},
            "report": None,
            "error_series": {},
            "histograms": {},
            "gps_table": None,
            "outputs": [],
            "errors": [],
            "processing_log": [],
            "failed_stage": None,
            "exception": None,
        }
        state.update(kwargs)
        return state

    def _invoke(self, state: PipelineState) -> PipelineState:
        result = self.graph.invoke(state)
        if result.get("errors"):
            self._remove_outputs(result.get("outputs", []))
            cause = result.get("exception") or RuntimeError("; ".join(result["errors"]))
            raise PipelineError(result.get("failed_stage") or "unknown", cause)
        for line in result.get("processing_log", []):
            logger.debug(line)
        return result

    @staticmethod
    def _remove_outputs(paths: List[str]) -> None:
        for path in paths:
            target = Path(path)
            if target.is_file():
                target.unlink()
                logger.info(f"removed partial output {target}")

    def simulate(self, scenario: ScenarioSpec, output_path: str) -> PipelineState:
        """Simulate a scenario and write its GT + sensor log"""
        return self._invoke(self._initial_state("simulate", scenario=scenario, output_path=output_path))

    def fuse(self, input_path: str, output_path: str, diag: bool = False) -> PipelineState:
        """Fuse a sensor log and write it back with EST records"""
        return self._invoke(self._initial_state("fuse", input_path=input_path, output_path=output_path, diag=diag))

    def evaluate(self, input_path: str, output_dir: str, baseline: bool = True) -> PipelineState:
        """Compare GPS, ix-only and fused errors of a log; reports go to `output_dir`"""
        return self._invoke(self._initial_state("eval", input_path=input_path, output_path=output_dir,
                                                baseline=baseline))

    def run_replica(self, scenario: ScenarioSpec, output_dir: Optional[str] = None,
                    baseline: bool = True) -> PipelineState:
        """simulate -> synchronize -> fuse -> evaluate in memory"""
        return self._invoke(self._initial_state("replica", scenario=scenario, output_path=output_dir,
                                                baseline=baseline))

    def replica_rows_for_seed(self, scenario: ScenarioSpec, base: int, replica_root: Optional[str],
                              seed: int) -> List[Dict[str, Any]]:
        replica_dir = str(Path(replica_root) / f"seed_{seed}") if replica_root else None
        state = self.run_replica(scenario.model_copy(update={"seed": seed}), replica_dir)
        return replica_rows(seed - base, seed, state)

    def montecarlo(
        self,
        scenario: ScenarioSpec,
        replicas: int,
        seed_base: Optional[int] = None,
        jobs: int = 1,
        output_dir: Optional[str] = None,
        keep_replicas: bool = False,
        on_progress: Optional[Callable[[ProgressInfo], None]] = None,
    ) -> Dict[str, pd.DataFrame]:
        """Run `replicas` independent replicas, replica i seeded with seed_base + i.

        With jobs > 1 the replicas run in worker processes.
        """
        base = scenario.seed if seed_base is None else seed_base
        seeds = [base + i for i in range(replicas)]
        replica_root = str(Path(output_dir) / "replicas") if keep_replicas and output_dir else None
        if jobs > 1:
            run_one = partial(run_replica_rows, self.params, self.form, scenario, base, replica_root)
        else:
            run_one = partial(self.replica_rows_for_seed, scenario, base, replica_root)

        tracker = ProgressTracker(f"montecarlo-{base}", total_stages=2)
        if on_progress is not None:
            tracker.add_callback(on_progress)

        tracker.start_stage(ProgressStage.REPLICAS, replicas, "running replicas")
        try:
            with ReplicaBatchProcessor(max_workers=jobs, processes=jobs > 1) as processor:
                rows = processor.run_replicas(seeds, run_one, tracker.batch_callback(ProgressStage.REPLICAS))
        except Exception as e:
            tracker.set_error(ProgressStage.REPLICAS, str(e))
            raise
        tracker.complete_stage(ProgressStage.REPLICAS)

        tracker.start_stage(ProgressStage.REPORTING, 1, "aggregating")
        per_replica = pd.DataFrame([row for replica in rows for row in replica], columns=REPLICA_COLUMNS)
        aggregate = aggregate_replicas(per_replica)
        if output_dir:
            directory = Path(output_dir)
            directory.mkdir(parents=True, exist_ok=True)
            per_replica.to_csv(directory / REPLICAS_FILE, index=False, lineterminator="\n", float_format="%.17g")
            aggregate.to_csv(directory / AGGREGATE_FILE, index=False, lineterminator="\n", float_format="%.17g")
        tracker.complete_stage(ProgressStage.REPORTING)
        tracker.complete_session(f"{replicas} replicas")
        return {"replicas": per_replica, "aggregate": aggregate}


REPLICA_COLUMNS = ["replica", "seed", "source", "n_epochs", "mean", "std", "rmse", "max",
                   "average_mean", "average_std"]


@lru_cache(maxsize=4)
def _worker_system(params: NoiseParams, form: str) -> LocalizationSystem:
    return LocalizationSystem(params, form)


def run_replica_rows(params: NoiseParams, form: str, scenario: ScenarioSpec, base: int,
                     replica_root: Optional[str], seed: int) -> List[Dict[str, Any]]:
    """One Monte-Carlo replica; module level so worker processes can unpickle it"""
    return _worker_system(params, form).replica_rows_for_seed(scenario, base, replica_root, seed)


def replica_rows(replica: int, seed: int, state: PipelineState) -> List[Dict[str, Any]]:
    """One row per source: pooled in-range stats plus the per-case averages"""
    report = state["report"]
    rows = []
    for name in report.sources:
        stats = report.overall[name]
        rows.append({
            "replica": replica,
            "seed": seed,
            "source": name,
            "n_epochs": stats.n if stats else 0,
            "mean": stats.mean if stats else np.nan,
            "std": stats.std if stats else np.nan,
            "rmse": stats.rmse if stats else np.nan,
            "max": stats.max if stats else np.nan,
            "average_mean": report.average_mean[name] if report.average_mean[name] is not None else np.nan,
            "average_std": report.average_std[name] if report.average_std[name] is not None else np.nan,
        })
    return rows


def aggregate_replicas(per_replica: pd.DataFrame) -> pd.DataFrame:
    """Mean / std across replicas of each source's in-range mean error"""
    if per_replica.empty:
        return pd.DataFrame(columns=["source", "replicas", "mean_of_means", "std_of_means", "mean_rmse",
                                     "mean_of_average_means"])
    grouped = per_replica.groupby("source", sort=False)
    return grouped.agg(
        replicas=("mean", "count"),
        mean_of_means=("mean", "mean"),
        std_of_means=("mean", "std"),
        mean_rmse=("rmse", "mean"),
        mean_of_average_means=("average_mean", "mean"),
    ).reset_index()


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)

    system = LocalizationSystem(NoiseParams())
    state = system.run_replica(ScenarioSpec(duration=60.0))
    print(state["report"].average_mean)
