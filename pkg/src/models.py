import math
from enum import Enum
from typing import Annotated, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    AfterValidator,
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from src.utils.validators import check_covariance

# Timestamps of one epoch must agree to this tolerance (seconds)
EPOCH_TIME_TOLERANCE = 1e-6


def _vector2(value: np.ndarray) -> np.ndarray:
    vec = np.array(value, dtype=float).reshape(-1)
    if vec.shape != (2,) or not np.all(np.isfinite(vec)):
        raise ValueError(f"expected a finite 2-vector, got {value!r}")
    vec.setflags(write=False)
    return vec


def _matrix2(value: np.ndarray) -> np.ndarray:
    mat = np.array(value, dtype=float)
    if mat.shape != (2, 2) or not np.all(np.isfinite(mat)):
        raise ValueError(f"expected a finite 2x2 matrix, got {value!r}")
    mat.setflags(write=False)
    return mat


def _float_array(value: np.ndarray) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    arr.setflags(write=False)
    return arr


Covariance2 = Annotated[np.ndarray, AfterValidator(check_covariance)]
Vector2 = Annotated[np.ndarray, AfterValidator(_vector2)]
Matrix2 = Annotated[np.ndarray, AfterValidator(_matrix2)]
FloatArray = Annotated[np.ndarray, AfterValidator(_float_array)]


class FrozenModel(BaseModel):
    """Immutable value object; NaN/Inf rejected on every float field"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, arbitrary_types_allowed=True)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

class EnuPoint(FrozenModel):
    """Position in the ENU East/North plane (meters)"""
    east: float
    north: float


class MapPoint(FrozenModel):
    """ENU position offset by the map origin (meters)"""
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_array(cls, value) -> "MapPoint":
        return cls(x=float(value[0]), y=float(value[1]))


class Heading(FrozenModel):
    """Vehicle orientation in radians, counterclockwise from ENU East, in [-pi, pi)"""
    theta: float

    @field_validator("theta")
    @classmethod
    def _normalize(cls, value: float) -> float:
        wrapped = (value + math.pi) % (2.0 * math.pi) - math.pi
        # float modulo can land exactly on +pi
        return -math.pi if wrapped >= math.pi else wrapped


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class GpsGateMode(str, Enum):
    """How far-off GPS fixes are rejected"""
    CHI2 = "chi2"
    RADIUS = "radius"


class LogFrame(str, Enum):
    """Frame of the positions stored in a sensor log"""
    MAP = "map"
    ENU = "enu"


class NoiseParams(FrozenModel):
    """Filter and sensor-noise parameters. Defaults are the Mcity values."""
    dt: float = Field(default=0.1, gt=0, description="time interval of the dynamic model (s)")
    x_o: float = Field(default=277495.0, description="East position of the map origin (m)")
    y_o: float = Field(default=4686600.0, description="North position of the map origin (m)")
    d_thresh: float = Field(default=5.0, gt=0, description="candidate gating radius (m)")
    sigma_x_gps: float = Field(default=0.8, ge=0)
    sigma_y_gps: float = Field(default=2.0, ge=0)
    sigma_y_ix: float = Field(default=0.3, ge=0)
    d_gnss: float = Field(default=0.0381, ge=0, description="lever arm of the ground-truth device (m)")
    node_x: float = Field(default=7.13, description="ix-node position in the map frame (m)")
    node_y: float = Field(default=62.19)
    ix_std_slope: float = Field(default=0.051)
    ix_std_offset: float = Field(default=0.702)
    ix_std_floor: float = Field(default=0.05, gt=0)
    process_q_x: float = Field(default=0.5, ge=0, description="process noise intensity (m^2/s)")
    process_q_y: float = Field(default=0.5, ge=0)
    correlated_offdiag: bool = True
    ix_radial_frame: bool = False
    detection_range: float = Field(default=50.0, gt=0)
    gps_gate: GpsGateMode = GpsGateMode.CHI2
    gps_gate_prob: float = Field(default=0.99, gt=0, lt=1)
    init_cov_pad: float = Field(default=1.0, ge=0, description="added to Q^gps for the initial covariance (m^2)")
    log_frame: LogFrame = LogFrame.MAP

    @property
    def node(self) -> MapPoint:
        return MapPoint(x=self.node_x, y=self.node_y)

    @property
    def origin(self) -> EnuPoint:
        return EnuPoint(east=self.x_o, north=self.y_o)


# Keys a fusion run must state explicitly in its config file
TABLE2_KEYS = (
    "dt", "x_o", "y_o", "d_thresh", "sigma_x_gps", "sigma_y_gps",
    "sigma_y_ix", "d_gnss", "node_x", "node_y",
)


def _default_waypoints() -> List[MapPoint]:
    # Rectangle whose long sides pass 12 m and 28 m from the node
    corners = [(-60.0, 50.0), (70.0, 50.0), (70.0, 90.0), (-60.0, 90.0)]
    return [MapPoint(x=x, y=y) for x, y in corners]


class ScenarioSpec(FrozenModel):
    """Synthetic run description"""
    waypoints: List[MapPoint] = Field(default_factory=_default_waypoints)
    speed: float = Field(default=5.0, gt=0)
    duration: float = Field(default=300.0, gt=0)
    gps_rate: float = Field(default=10.0, gt=0)
    imu_rate: float = Field(default=100.0, gt=0)
    ix_rate: float = Field(default=20.0, gt=0)
    tunnel_intervals: List[Tuple[float, float]] = Field(default_factory=list)
    occlusion_prob: float = Field(default=0.05, ge=0, le=1)
    clutter_rate: float = Field(default=0.1, ge=0)
    seed: int = 0
    vel_sigma: float = Field(default=0.1, ge=0)
    imu_bias_sigma: float = Field(default=0.0, ge=0)
    tunnel_noise_factor: float = Field(default=4.0, ge=0)
    tunnel_drop_prob: float = Field(default=0.5, ge=0, le=1)
    noise_scale: float = Field(default=1.0, ge=0)
    loop_path: bool = False
    start_time: float = 0.0

    @model_validator(mode="after")
    def _check_intervals(self) -> "ScenarioSpec":
        for start, end in self.tunnel_intervals:
            if not 0.0 <= start <= end <= self.duration:
                raise ValueError(
                    f"tunnel interval [{start}, {end}] must lie within [0, {self.duration}]"
                )
        return self


# ---------------------------------------------------------------------------
# Filter values
# ---------------------------------------------------------------------------

class VehicleState(FrozenModel):
    """Filter state X_t with covariance"""
    pos: MapPoint
    cov: Covariance2
    t: float


class VelocityInput(FrozenModel):
    """IMU velocity used as the control input"""
    vx: float
    vy: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


class MeasurementSource(str, Enum):
    GPS = "GPS"
    IX = "IX"


class Measurement(FrozenModel):
    """Position observation with its noise covariance (Q^gps or Q^ix)"""
    pos: MapPoint
    t: float
    source: MeasurementSource
    noise: Covariance2


class FusionEpochResult(FrozenModel):
    """Every intermediate of one predict + sequential-update step"""
    predicted: VehicleState
    gps_innovation: Optional[Vector2] = None
    gps_innovation_cov: Optional[Covariance2] = None
    gps_gain: Optional[Matrix2] = None
    post_gps: Optional[VehicleState] = None
    ix_innovation: Optional[Vector2] = None
    ix_innovation_cov: Optional[Covariance2] = None
    ix_gain: Optional[Matrix2] = None
    final: VehicleState
    gps_measurement: Optional[Measurement] = None
    ix_measurement: Optional[Measurement] = None


# ---------------------------------------------------------------------------
# Association / streams
# ---------------------------------------------------------------------------

class CandidateSet(FrozenModel):
    """Vehicle candidates reported by the node in one frame"""
    t: float
    candidates: List[MapPoint] = Field(default_factory=list)


class GpsFix(FrozenModel):
    """One GPS clock tick; pos is None when no fix was available"""
    t: float
    pos: Optional[MapPoint] = None


class RawEpoch(FrozenModel):
    """Inputs aligned to one GPS tick, before gating"""
    t: float
    vel: VelocityInput
    gps_fix: Optional[MapPoint] = None
    candidates: CandidateSet


class SyncedEpoch(FrozenModel):
    """Gated inputs of one fusion step"""
    t: float
    vel: VelocityInput
    gps: Optional[Measurement] = None
    ix: Optional[Measurement] = None

    @model_validator(mode="after")
    def _check_alignment(self) -> "SyncedEpoch":
        for name, stamp in (("vel", self.vel.t),
                            ("gps", self.gps.t if self.gps else None),
                            ("ix", self.ix.t if self.ix else None)):
            if stamp is not None and abs(stamp - self.t) > EPOCH_TIME_TOLERANCE:
                raise ValueError(f"{name} timestamp {stamp} differs from epoch time {self.t}")
        if self.gps is not None and self.gps.source != MeasurementSource.GPS:
            raise ValueError("gps slot holds a non-GPS measurement")
        if self.ix is not None and self.ix.source != MeasurementSource.IX:
            raise ValueError("ix slot holds a non-IX measurement")
        return self


class Trajectory(FrozenModel):
    """Ground-truth samples: t (N,), pos (N, 2), vel (N, 2), heading (N,)"""
    t: FloatArray
    pos: FloatArray
    vel: FloatArray
    heading: FloatArray

    @model_validator(mode="after")
    def _check_shapes(self) -> "Trajectory":
        n = self.t.shape[0]
        if self.pos.shape != (n, 2) or self.vel.shape != (n, 2) or self.heading.shape != (n,):
            raise ValueError("trajectory arrays have inconsistent shapes")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        return self

    def __len__(self) -> int:
        return int(self.t.shape[0])


class SensorStreams(FrozenModel):
    """Simulated or logged sensor input, each list time-sorted"""
    gps: List[GpsFix] = Field(default_factory=list)
    imu: List[VelocityInput] = Field(default_factory=list)
    ix: List[CandidateSet] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Logs
# ---------------------------------------------------------------------------

class RecordKind(str, Enum):
    GT = "GT"
    GPS = "GPS"
    IMU = "IMU"
    IX = "IX"
    EST = "EST"


# Allowed payload lengths; 0 marks a GPS tick without fix / an empty ix frame
RECORD_ARITY: Dict[RecordKind, Tuple[int, ...]] = {
    RecordKind.GT: (5,),
    RecordKind.GPS: (2, 0),
    RecordKind.IMU: (2,),
    RecordKind.IX: (2, 0),
    RecordKind.EST: (5,),
}


class LogRecord(FrozenModel):
    """One CSV row"""
    kind: RecordKind
    t: float
    payload: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_arity(self) -> "LogRecord":
        if len(self.payload) not in RECORD_ARITY[self.kind]:
            raise ValueError(
                f"{self.kind.value} record needs {RECORD_ARITY[self.kind]} payload fields, "
                f"got {len(self.payload)}"
            )
        return self


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class EstimateSeries(FrozenModel):
    """Position estimates of one source: t (N,), pos (N, 2)"""
    source: str
    t: FloatArray
    pos: FloatArray

    @model_validator(mode="after")
    def _check_shapes(self) -> "EstimateSeries":
        if self.pos.shape != (self.t.shape[0], 2):
            raise ValueError("estimate arrays have inconsistent shapes")
        return self

    def __len__(self) -> int:
        return int(self.t.shape[0])


class ErrorComponent(str, Enum):
    LONGITUDINAL = "long"
    LATERAL = "lat"
    TOTAL = "total"


class ErrorSeries(FrozenModel):
    """Per-epoch errors; long/lat are signed, total is their norm"""
    t: FloatArray
    longitudinal: FloatArray
    lateral: FloatArray
    total: FloatArray
    heading_aware: bool = True
    dropped: int = 0

    @model_validator(mode="after")
    def _check_norm(self) -> "ErrorSeries":
        n = self.t.shape[0]
        if any(a.shape != (n,) for a in (self.longitudinal, self.lateral, self.total)):
            raise ValueError("error arrays have inconsistent shapes")
        if n and not np.allclose(self.total, np.hypot(self.longitudinal, self.lateral),
                                 rtol=0.0, atol=1e-12):
            raise ValueError("total error must equal the norm of its components")
        return self

    def component(self, which: ErrorComponent) -> np.ndarray:
        if which == ErrorComponent.LONGITUDINAL:
            return self.longitudinal
        if which == ErrorComponent.LATERAL:
            return self.lateral
        return self.total

    def __len__(self) -> int:
        return int(self.t.shape[0])


class SummaryStats(FrozenModel):
    """Mean / sample std (n-1) / RMSE / max of absolute errors"""
    mean: float
    std: float = Field(ge=0)
    rmse: float = Field(ge=0)
    max: float
    n: int = Field(ge=1)


class HistogramBins(FrozenModel):
    """Counts of bins [range_start + k*w, range_start + (k+1)*w)"""
    bin_width: float = Field(gt=0)
    counts: List[int] = Field(default_factory=list)
    range_start: float = 0.0


class CaseWindow(FrozenModel):
    name: str
    start: float
    end: float


class CaseStats(FrozenModel):
    """Stats of one source in one case window; stats is None when the window is empty"""
    case: str
    source: str
    n_epochs: int
    stats: Optional[SummaryStats] = None


class ComparisonReport(FrozenModel):
    """Per-case and averaged statistics of several estimate sources"""
    sources: List[str]
    cases: List[CaseWindow]
    rows: List[CaseStats]
    average_mean: Dict[str, Optional[float]]
    average_std: Dict[str, Optional[float]]
    overall: Dict[str, Optional[SummaryStats]]

    def row(self, case: str, source: str) -> CaseStats:
        for row in self.rows:
            if row.case == case and row.source == source:
                return row
        raise KeyError((case, source))


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

class RunMode(str, Enum):
    SIMULATE = "simulate"
    FUSE = "fuse"
    EVAL = "eval"
    MONTECARLO = "montecarlo"


class RunSpec(FrozenModel):
    """Parsed command line"""
    subcommand: RunMode
    config_path: str
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    replicas: int = Field(default=1, ge=1)
    seed_base: Optional[int] = None
    jobs: int = Field(default=1, ge=1)
    paper_literal: bool = False
    diag: bool = False
    keep_replicas: bool = False

    @model_validator(mode="after")
    def _check_paths(self) -> "RunSpec":
        if self.subcommand in (RunMode.FUSE, RunMode.EVAL) and not self.input_path:
            raise ValueError(f"'{self.subcommand.value}' needs --input")
        if not self.output_path:
            raise ValueError(f"'{self.subcommand.value}' needs --output")
        return self
