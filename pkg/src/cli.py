"""
Command line: python -m src.cli {simulate,fuse,eval,montecarlo} --config FILE --output PATH ...

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
degeneracy, 3 I/O error.
"""

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from src.config import Config, load_config
from src.exceptions import NumericalDegeneracyError, PipelineError, UsageError
from src.main import LocalizationSystem
from src.models import GpsGateMode, NoiseParams, RunMode, RunSpec
from src.services.ekf_filter import JOSEPH
from src.services.metrics_service import format_report_table
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DEGENERATE = 2
EXIT_IO = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting with status 2"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="ix-localization",
                            description="GPS / IMU / ix-node fusion for vehicle localization")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="key = value parameter file")
        p.add_argument("--output", required=True, help="output log (simulate, fuse) or directory (eval, montecarlo)")
        p.add_argument("--paper-literal", action="store_true",
                       help="correlated noise matrices and a fixed-radius GPS gate")

    p = sub.add_parser("simulate", help="generate a ground-truth + sensor log")
    common(p)
    p.add_argument("--seed", type=int, help="overrides the config seed")

    p = sub.add_parser("fuse", help="run the filter over a log and append EST records")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--diag", action="store_true", help="write <output>.diag.csv with innovations and gains")

    p = sub.add_parser("eval", help="compare GPS, ix-only and fused errors of a log")
    common(p)
    p.add_argument("--input", required=True)

    p = sub.add_parser("montecarlo", help="run seeded simulate/fuse/eval replicas")
    common(p)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, help="seed of replica 0, replica i uses seed + i")
    p.add_argument("--jobs", type=int, default=Config.DEFAULT_JOBS)
    p.add_argument("--keep-replicas", action="store_true", help="keep per-replica logs and reports")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> RunSpec:
    args = build_parser().parse_args(argv)
    return RunSpec(
        subcommand=RunMode(args.subcommand),
        config_path=args.config,
        input_path=getattr(args, "input", None),
        output_path=args.output,
        replicas=getattr(args, "replicas", 1),
        seed_base=getattr(args, "seed", None),
        jobs=getattr(args, "jobs", 1),
        paper_literal=args.paper_literal,
        diag=getattr(args, "diag", False),
        keep_replicas=getattr(args, "keep_replicas", False),
    )


def apply_literal_model(params: NoiseParams) -> NoiseParams:
    return params.model_copy(update={"correlated_offdiag": True, "gps_gate": GpsGateMode.RADIUS})


def _execute(spec: RunSpec) -> None:
    Config.ensure_valid_config()
    params, scenario = load_config(spec.config_path, fusion_mode=spec.subcommand != RunMode.SIMULATE)
    if spec.paper_literal:
        params = apply_literal_model(params)

    system = LocalizationSystem(params, form=JOSEPH)
    if spec.subcommand == RunMode.SIMULATE:
        if spec.seed_base is not None:
            scenario = scenario.model_copy(update={"seed": spec.seed_base})
        system.simulate(scenario, spec.output_path)
    elif spec.subcommand == RunMode.FUSE:
        system.fuse(spec.input_path, spec.output_path, diag=spec.diag)
    elif spec.subcommand == RunMode.EVAL:
        state = system.evaluate(spec.input_path, spec.output_path)
        print(format_report_table(state["report"]))
    else:
        outputs = system.montecarlo(scenario, spec.replicas, seed_base=spec.seed_base, jobs=spec.jobs,
                                    output_dir=spec.output_path, keep_replicas=spec.keep_replicas)
        print(outputs["aggregate"].to_string(index=False))


def exit_code(error: BaseException) -> int:
    """Map an exception (or the cause of a pipeline failure) to an exit status"""
    if isinstance(error, PipelineError):
        error = error.cause
    if isinstance(error, NumericalDegeneracyError):
        return EXIT_DEGENERATE
    if isinstance(error, OSError):
        return EXIT_IO
    # InvalidInputError, ConfigError, ValidationError and anything unexpected
    return EXIT_INVALID


def run(spec: RunSpec) -> int:
    try:
        _execute(spec)
    except Exception as e:
        stage = e.stage if isinstance(e, PipelineError) else "setup"
        logger.error(f"{spec.subcommand.value} failed in stage '{stage}': {e}")
        print(f"error [{stage}]: {e}", file=sys.stderr)
        return exit_code(e)
    logger.info(f"{spec.subcommand.value} finished")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    try:
        spec = parse_args(argv)
    except (ValidationError, UsageError) as e:
        print(f"error [arguments]: {e}", file=sys.stderr)
        return EXIT_INVALID
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
