import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from src.exceptions import InvalidInputError
from src.models import TABLE2_KEYS, MapPoint, NoiseParams, ScenarioSpec
from src.utils.logger import setup_logger

load_dotenv()


class ConfigError(InvalidInputError):
    """Configuration error"""
    pass


class Config:
    """Runtime settings (environment / .env)"""
    LOG_LEVEL = os.getenv("LOCALIZATION_LOG_LEVEL", "INFO")
    LOG_DIR = os.getenv("LOCALIZATION_LOG_DIR", "logs")

    # Monte-Carlo
    DEFAULT_JOBS = int(os.getenv("LOCALIZATION_JOBS", 4))
    OUTPUT_DIR = os.getenv("LOCALIZATION_OUTPUT_DIR", "output")

    # Evaluation
    HIST_BIN_WIDTH = float(os.getenv("LOCALIZATION_HIST_BIN_WIDTH", 0.25))
    RMS_WINDOW = float(os.getenv("LOCALIZATION_RMS_WINDOW", 1.0))

    @classmethod
    def validate_config(cls) -> List[str]:
        """Check the settings, return a list of problems"""
        errors = []
        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"LOCALIZATION_LOG_LEVEL has unknown level {cls.LOG_LEVEL!r}")
        if cls.DEFAULT_JOBS <= 0:
            errors.append("LOCALIZATION_JOBS must be greater than 0")
        if cls.HIST_BIN_WIDTH <= 0:
            errors.append("LOCALIZATION_HIST_BIN_WIDTH must be greater than 0")
        if cls.RMS_WINDOW <= 0:
            errors.append("LOCALIZATION_RMS_WINDOW must be greater than 0")
        return errors

    @classmethod
    def get_config_summary(cls) -> Dict[str, Any]:
        return {
            "log_level": cls.LOG_LEVEL,
            "log_dir": cls.LOG_DIR,
            "default_jobs": cls.DEFAULT_JOBS,
            "output_dir": cls.OUTPUT_DIR,
            "hist_bin_width": cls.HIST_BIN_WIDTH,
            "rms_window": cls.RMS_WINDOW,
        }

    @classmethod
    def ensure_valid_config(cls):
        """Raise ConfigError if any setting is invalid"""
        errors = cls.validate_config()
        if errors:
            error_msg = "configuration invalid:\n" + "\n".join(f"- {error}" for error in errors)
            raise ConfigError(error_msg)

        logger.info("configuration valid")

    @classmethod
    def log_config_status(cls):
        summary = cls.get_config_summary()
        logger.info("=== runtime configuration ===")
        for key, value in summary.items():
            logger.info(f"{key}: {value}")

        errors = cls.validate_config()
        if errors:
            logger.warning("configuration problems:")
            for error in errors:
                logger.warning(f"  - {error}")


logger = setup_logger(__name__)


# ---------------------------------------------------------------------------
# Scenario / parameter files
# ---------------------------------------------------------------------------

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_waypoints(key: str, raw: str, line: int) -> List[MapPoint]:
    points = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigError(f"line {line}: {key} expects 'x y; x y; ...', got {chunk!r}")
        x, y = (_parse_float(key, p, line) for p in parts)
        points.append(MapPoint(x=x, y=y))
    return points


def _parse_intervals(key: str, raw: str, line: int) -> List[Tuple[float, float]]:
    intervals = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"line {line}: {key} expects 'start:end, ...', got {chunk!r}")
        intervals.append((_parse_float(key, parts[0], line), _parse_float(key, parts[1], line)))
    return intervals


def _parse_float(key: str, raw: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {line}: {key} needs a numeric value, got {raw!r}") from None


def _parse_value(key: str, annotation: Any, raw: str, line: int) -> Any:
    if key == "waypoints":
        return _parse_waypoints(key, raw, line)
    if key == "tunnel_intervals":
        return _parse_intervals(key, raw, line)
    if annotation is bool:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"line {line}: {key} needs true/false, got {raw!r}")
    if annotation is int:
        value = _parse_float(key, raw, line)
        if not value.is_integer():
            raise ConfigError(f"line {line}: {key} needs an integer, got {raw!r}")
        return int(value)
    if isinstance(annotation, type) and issubclass(annotation, Enum):
        try:
            return annotation(raw.lower())
        except ValueError:
            allowed = ", ".join(m.value for m in annotation)
            raise ConfigError(f"line {line}: {key} must be one of {allowed}, got {raw!r}") from None
    return _parse_float(key, raw, line)


def load_config(path: Union[str, Path], fusion_mode: bool = True) -> Tuple[NoiseParams, ScenarioSpec]:
    """Read a `key = value` file into (NoiseParams, ScenarioSpec).

    Missing simulator keys take their defaults. In fusion mode every Table 2
    key must be present.
    """
    path = Path(path)
    noise_fields = NoiseParams.model_fields
    scenario_fields = ScenarioSpec.model_fields

    noise_kwargs: Dict[str, Any] = {}
    scenario_kwargs: Dict[str, Any] = {}
    seen: Dict[str, int] = {}

    with path.open("r", encoding="utf-8") as handle:
        for line_no, text in enumerate(handle, start=1):
            content = text.split("#", 1)[0].strip()
            if not content:
                continue
            if "=" not in content:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {content!r}")
            key, raw = (part.strip() for part in content.split("=", 1))
            if key in noise_fields:
                target, annotation = noise_kwargs, noise_fields[key].annotation
            elif key in scenario_fields:
                target, annotation = scenario_kwargs, scenario_fields[key].annotation
            else:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if key in seen:
                logger.warning(
                    f"{path}: key {key!r} repeated on line {line_no} (first on line {seen[key]}), last value wins"
                )
            seen[key] = line_no
            target[key] = _parse_value(key, annotation, raw, line_no)

    if fusion_mode:
        missing = [key for key in TABLE2_KEYS if key not in noise_kwargs]
        if missing:
            raise ConfigError(f"{path}: missing required key(s): {', '.join(missing)}")

    try:
        params = NoiseParams(**noise_kwargs)
        scenario = ScenarioSpec(**scenario_kwargs)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid value: {exc}") from exc

    logger.info(f"loaded config {path} ({len(seen)} keys)")
    return params, scenario
