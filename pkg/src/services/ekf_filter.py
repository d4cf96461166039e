"""
Position filter: constant-velocity prediction followed by a GPS update and then
an ix-node update.

Both motion and observation models are linear in [x, y], so the Jacobians G and
H are the 2x2 identity and are not formed explicitly. (The observation Jacobian
is described as d X_hat / d X^gps in the source material, the inverse of the usual
d h / d X; for H = I the two coincide.)
"""

import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve

from src.exceptions import InvalidInputError
from src.models import (
    FusionEpochResult,
    MapPoint,
    Measurement,
    MeasurementSource,
    NoiseParams,
    RawEpoch,
    SyncedEpoch,
    VehicleState,
    VelocityInput,
)
from src.services.data_association import gate_candidates, gate_gps, select_candidate
from src.services.noise_model import gps_covariance, innovation_factor, ix_covariance, process_noise
from src.utils.logger import setup_logger
from src.utils.validators import ensure_finite

logger = setup_logger(__name__)

JOSEPH = "joseph"
STANDARD = "standard"

_EYE = np.eye(2)


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def predict(state: VehicleState, vel: VelocityInput, params: NoiseParams,
            dt: Optional[float] = None) -> VehicleState:
    """x_{t+1} = x_t + v*dt, cov_{t+1} = cov_t + R"""
    ensure_finite("velocity", vel.vx, vel.vy)
    if vel.t < state.t - 1e-9:
        raise InvalidInputError(f"velocity at t={vel.t} predates the state at t={state.t}")
    step = params.dt if dt is None else dt
    if not math.isfinite(step) or step <= 0:
        raise InvalidInputError(f"prediction interval must be positive, got {step}")

    pos = MapPoint(x=state.pos.x + vel.vx * step, y=state.pos.y + vel.vy * step)
    cov = _symmetrize(state.cov + process_noise(params, step))
    return VehicleState(pos=pos, cov=cov, t=state.t + step)


def kalman_correct(
    pos: np.ndarray, cov: np.ndarray, z: np.ndarray, noise: np.ndarray, form: str = JOSEPH
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One H = I update. Returns (pos, cov, innovation, S, K)."""
    innovation = z - pos
    S, factor = innovation_factor(cov, noise)
    # K = Sigma S^-1; both symmetric so K^T = S^-1 Sigma
    gain = cho_solve(factor, cov, check_finite=False).T

    new_pos = pos + gain @ innovation
    if form == JOSEPH:
        residual = _EYE - gain
        new_cov = residual @ cov @ residual.T + gain @ noise @ gain.T
    elif form == STANDARD:
        new_cov = (_EYE - gain) @ cov
    else:
        raise InvalidInputError(f"unknown covariance update form {form!r}")
    return new_pos, _symmetrize(new_cov), innovation, S, gain


def measurement_update(state: VehicleState, m: Measurement, form: str = JOSEPH) -> VehicleState:
    """Correct a state with one position measurement (GPS or ix)"""
    pos, cov, _, _, _ = kalman_correct(state.pos.as_array(), state.cov, m.pos.as_array(), m.noise, form)
    return VehicleState(pos=MapPoint.from_array(pos), cov=cov, t=state.t)


def _make_state(pos: np.ndarray, cov: np.ndarray, t: float, trusted: bool) -> VehicleState:
    if not trusted:
        return VehicleState(pos=MapPoint.from_array(pos), cov=cov, t=t)
    # filter output: finite, symmetrized and PSD by the Joseph update
    cov.setflags(write=False)
    return VehicleState.model_construct(pos=MapPoint.model_construct(x=float(pos[0]), y=float(pos[1])),
                                        cov=cov, t=t)


def _sequential_update(
    predicted: VehicleState,
    gps: Optional[Measurement],
    ix: Optional[Measurement],
    form: str,
    trusted: bool = False,
) -> FusionEpochResult:
    pos, cov = predicted.pos.as_array(), predicted.cov
    fields = {"predicted": predicted, "gps_measurement": gps, "ix_measurement": ix}

    if gps is not None:
        pos, cov, nu, S, K = kalman_correct(pos, cov, gps.pos.as_array(), gps.noise, form)
        post_gps = _make_state(pos, cov, predicted.t, trusted)
        fields.update(gps_innovation=nu, gps_innovation_cov=S, gps_gain=K, post_gps=post_gps)

    if ix is not None:
        pos, cov, nu, S, K = kalman_correct(pos, cov, ix.pos.as_array(), ix.noise, form)
        fields.update(ix_innovation=nu, ix_innovation_cov=S, ix_gain=K)

    if gps is None and ix is None:
        final = predicted
    elif ix is None:
        final = fields["post_gps"]
    else:
        final = _make_state(pos, cov, predicted.t, trusted)
    if trusted:
        return FusionEpochResult.model_construct(final=final, **fields)
    return FusionEpochResult(final=final, **fields)


def fuse_epoch(
    state: VehicleState,
    epoch: SyncedEpoch,
    params: NoiseParams,
    control: Optional[VelocityInput] = None,
    dt: Optional[float] = None,
    form: str = JOSEPH,
) -> FusionEpochResult:
    """Predict to the epoch, then apply the GPS update and the ix update in that order.

    `control` is the velocity driving the prediction; it defaults to the
    epoch's own velocity.
    """
    step = params.dt if dt is None else dt
    if abs(epoch.t - (state.t + step)) > step / 2.0:
        raise InvalidInputError(
            f"epoch at t={epoch.t} is not the next step after the state at t={state.t} (dt={step})"
        )
    predicted = predict(state, control if control is not None else epoch.vel, params, step)
    predicted = predicted.model_copy(update={"t": epoch.t})
    return _sequential_update(predicted, epoch.gps, epoch.ix, form)


@dataclass
class FilterStats:
    """Counters of one filter run"""
    epochs: int = 0
    skipped_before_init: int = 0
    gps_accepted: int = 0
    gps_rejected: int = 0
    gps_missing: int = 0
    ix_used: int = 0
    ix_missing: int = 0
    coasting: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class LocalizationFilter:
    """Single-vehicle filter driven epoch by epoch.

    Not thread-safe; run one instance per stream.
    """

    def __init__(self, params: NoiseParams, use_ix: bool = True, use_gps: bool = True, form: str = JOSEPH):
        self.params = params
        self.use_ix = use_ix
        self.use_gps = use_gps
        self.form = form
        self.state: Optional[VehicleState] = None
        self.stats = FilterStats()
        self._control: Optional[VelocityInput] = None
        self._gps_noise = gps_covariance(params)
        self._process_noise = process_noise(params)

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def _initialize(self, raw: RawEpoch) -> FusionEpochResult:
        cov = self._gps_noise + self.params.init_cov_pad * np.eye(2)
        self.state = VehicleState(pos=raw.gps_fix, cov=cov, t=raw.t)
        self._control = raw.vel
        logger.info(f"filter initialized at t={raw.t:.6f} from GPS fix ({raw.gps_fix.x:.3f}, {raw.gps_fix.y:.3f})")
        fix = Measurement(pos=raw.gps_fix, t=raw.t, source=MeasurementSource.GPS, noise=self._gps_noise)
        return FusionEpochResult(predicted=self.state, final=self.state, gps_measurement=fix)

    def _step_interval(self, t: float) -> float:
        gap = t - self.state.t
        if gap <= 0:
            raise InvalidInputError(f"epoch at t={t} does not follow the state at t={self.state.t}")
        # Regular ticks use the nominal interval, gaps use the elapsed time
        return self.params.dt if abs(gap - self.params.dt) <= self.params.dt / 2.0 else gap

    def step(self, raw: RawEpoch) -> Optional[FusionEpochResult]:
        """Consume one aligned epoch; None until the first GPS fix arrives"""
        self.stats.epochs += 1
        if self.state is None:
            if raw.gps_fix is None:
                self.stats.skipped_before_init += 1
                return None
            self.stats.gps_accepted += 1
            return self._initialize(raw)

        dt = self._step_interval(raw.t)
        noise = self._process_noise if dt == self.params.dt else process_noise(self.params, dt)
        pos = self.state.pos.as_array() + self._control.as_array() * dt
        predicted = _make_state(pos, _symmetrize(self.state.cov + noise), raw.t, trusted=True)

        gps = None
        if raw.gps_fix is None or not self.use_gps:
            self.stats.gps_missing += 1
        else:
            fix = Measurement.model_construct(pos=raw.gps_fix, t=raw.t, source=MeasurementSource.GPS,
                                              noise=self._gps_noise)
            gps = gate_gps(fix, predicted, self.params)
            if gps is None:
                self.stats.gps_rejected += 1
                logger.debug(f"t={raw.t:.6f}: GPS fix rejected by the gate")
            else:
                self.stats.gps_accepted += 1

        ix = None
        if self.use_ix:
            chosen = select_candidate(gate_candidates(raw.candidates, predicted, self.params), predicted)
            if chosen is None:
                self.stats.ix_missing += 1
            else:
                ix = Measurement.model_construct(pos=chosen, t=raw.t, source=MeasurementSource.IX,
                                                 noise=ix_covariance(chosen, self.params))
                self.stats.ix_used += 1

        if gps is None and ix is None:
            self.stats.coasting += 1

        result = _sequential_update(predicted, gps, ix, self.form, trusted=True)
        self.state = result.final
        self._control = raw.vel
        return result

    def run(self, epochs: Iterable[RawEpoch]) -> List[FusionEpochResult]:
        results = []
        for raw in epochs:
            result = self.step(raw)
            if result is not None:
                results.append(result)
        logger.info(f"filter run finished (use_gps={self.use_gps}, use_ix={self.use_ix}): {self.stats.to_dict()}")
        return results
