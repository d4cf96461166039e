"""
Time alignment of the GPS / IMU / ix streams to the GPS clock, and spatial
gating of ix candidates and GPS fixes.

The GPS has the lowest rate, so every epoch sits on a GPS tick. IMU velocity
and ix candidate positions are linearly interpolated to the tick (negligible
acceleration between samples); nothing is extrapolated.
"""

import functools
import math
from bisect import bisect_left
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve
from scipy.stats import chi2

from src.exceptions import InvalidInputError
from src.models import (
    CandidateSet,
    GpsFix,
    GpsGateMode,
    MapPoint,
    Measurement,
    MeasurementSource,
    NoiseParams,
    RawEpoch,
    VehicleState,
    VelocityInput,
)
from src.services.noise_model import innovation_factor
from src.utils.geo import node_distance
from src.utils.logger import setup_logger
from src.utils.validators import ensure_sorted

logger = setup_logger(__name__)

# Two timestamps closer than this are the same sample
KNOT_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# Gating
# ---------------------------------------------------------------------------

@functools.lru_cache
def gate_threshold(prob: float, ndim: int = 2) -> float:
    """Chi-square quantile used as the squared Mahalanobis gate (9.21 for 0.99, 2 dof)"""
    return float(chi2.ppf(prob, ndim))


def mahalanobis_sq(fix: Measurement, predicted: VehicleState) -> float:
    """Squared Mahalanobis distance of the innovation under S = Sigma + Q"""
    nu = fix.pos.as_array() - predicted.pos.as_array()
    _, factor = innovation_factor(predicted.cov, fix.noise)
    return float(nu @ cho_solve(factor, nu, check_finite=False))


def gate_gps(fix: Measurement, predicted: VehicleState, params: NoiseParams) -> Optional[Measurement]:
    """Return the fix if it is close enough to the prediction, None otherwise"""
    if fix.source != MeasurementSource.GPS:
        raise InvalidInputError(f"gate_gps expects a GPS measurement, got {fix.source.value}")
    if params.gps_gate == GpsGateMode.RADIUS:
        dist = math.hypot(fix.pos.x - predicted.pos.x, fix.pos.y - predicted.pos.y)
        return fix if dist <= params.d_thresh else None
    return fix if mahalanobis_sq(fix, predicted) <= gate_threshold(params.gps_gate_prob) else None


def gate_candidates(cands: CandidateSet, predicted: VehicleState, params: NoiseParams) -> CandidateSet:
    """Keep candidates within d_thresh of the prediction and inside the node's detection range"""
    kept = [
        c for c in cands.candidates
        if math.hypot(c.x - predicted.pos.x, c.y - predicted.pos.y) <= params.d_thresh
        and node_distance(c, params.node) <= params.detection_range
    ]
    return CandidateSet(t=cands.t, candidates=kept)


def select_candidate(cands: CandidateSet, predicted: VehicleState) -> Optional[MapPoint]:
    """Nearest candidate to the prediction; ties go to the earliest one"""
    if not cands.candidates:
        return None
    best = min(
        range(len(cands.candidates)),
        key=lambda i: (math.hypot(cands.candidates[i].x - predicted.pos.x,
                                  cands.candidates[i].y - predicted.pos.y), i),
    )
    return cands.candidates[best]


# ---------------------------------------------------------------------------
# Synchronization
# ---------------------------------------------------------------------------

def _bracket(times: Sequence[float], t: float) -> Optional[Tuple[int, int, float]]:
    """(lo, hi, w) with t = (1-w)*times[lo] + w*times[hi]; lo == hi on a knot.

    None when t lies outside [times[0], times[-1]].
    """
    if not times or t < times[0] - KNOT_TOLERANCE or t > times[-1] + KNOT_TOLERANCE:
        return None
    j = bisect_left(times, t)
    if j < len(times) and abs(times[j] - t) <= KNOT_TOLERANCE:
        return j, j, 0.0
    if j > 0 and abs(times[j - 1] - t) <= KNOT_TOLERANCE:
        return j - 1, j - 1, 0.0
    lo, hi = j - 1, j
    return lo, hi, (t - times[lo]) / (times[hi] - times[lo])


def _velocity_at(imu: Sequence[VelocityInput], lo: int, hi: int, w: float, t: float) -> VelocityInput:
    a = imu[lo]
    if lo == hi:
        return VelocityInput(vx=a.vx, vy=a.vy, t=t)
    b = imu[hi]
    return VelocityInput(vx=a.vx + w * (b.vx - a.vx), vy=a.vy + w * (b.vy - a.vy), t=t)


def pair_candidates(first: CandidateSet, second: CandidateSet, d_thresh: float) -> List[Tuple[int, int]]:
    """Greedy nearest-neighbor pairing between two frames.

    Pairs are taken in increasing distance; a pair farther apart than d_thresh
    is never formed. Returned sorted by the index in `first`.
    """
    if not first.candidates or not second.candidates:
        return []
    a = np.array([[c.x, c.y] for c in first.candidates])
    b = np.array([[c.x, c.y] for c in second.candidates])
    dist = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])

    pairs = []
    used_a, used_b = set(), set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), dist.shape[1])
        if dist[i, j] > d_thresh:
            break
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return sorted(pairs)


def _candidates_at(ix: Sequence[CandidateSet], lo: int, hi: int, w: float, t: float,
                   d_thresh: float) -> CandidateSet:
    a = ix[lo]
    if lo == hi:
        return CandidateSet(t=t, candidates=list(a.candidates))
    b = ix[hi]
    merged = []
    for i, j in pair_candidates(a, b, d_thresh):
        p, q = a.candidates[i], b.candidates[j]
        merged.append(MapPoint(x=p.x + w * (q.x - p.x), y=p.y + w * (q.y - p.y)))
    return CandidateSet(t=t, candidates=merged)


def _align_tick(fix: GpsFix, imu_t: Sequence[float], imu: Sequence[VelocityInput],
                ix_t: Sequence[float], ix: Sequence[CandidateSet],
                params: NoiseParams, use_ix_span: bool) -> Optional[RawEpoch]:
    """Epoch at one GPS tick, None when the tick is outside a stream's span"""
    vel_bracket = _bracket(imu_t, fix.t)
    if vel_bracket is None:
        return None
    if use_ix_span:
        ix_bracket = _bracket(ix_t, fix.t)
        if ix_bracket is None:
            return None
        candidates = _candidates_at(ix, *ix_bracket, t=fix.t, d_thresh=params.d_thresh)
    else:
        candidates = CandidateSet(t=fix.t)
    return RawEpoch(
        t=fix.t,
        vel=_velocity_at(imu, *vel_bracket, t=fix.t),
        gps_fix=fix.pos,
        candidates=candidates,
    )


def synchronize_streams(gps_stream: Sequence[GpsFix], imu_stream: Sequence[VelocityInput],
                        ix_stream: Sequence[CandidateSet], params: NoiseParams) -> List[RawEpoch]:
    """One pre-gating epoch per GPS tick inside the overlap of the stream spans.

    An empty ix stream does not restrict the overlap; its epochs carry no
    candidates.
    """
    gps_t = [g.t for g in gps_stream]
    imu_t = [v.t for v in imu_stream]
    ix_t = [c.t for c in ix_stream]
    ensure_sorted("GPS stream", gps_t, strict=True)
    ensure_sorted("IMU stream", imu_t, strict=True)
    ensure_sorted("ix stream", ix_t, strict=True)

    epochs = []
    for fix in gps_stream:
        epoch = _align_tick(fix, imu_t, imu_stream, ix_t, ix_stream, params, use_ix_span=bool(ix_stream))
        if epoch is not None:
            epochs.append(epoch)

    dropped = len(gps_stream) - len(epochs)
    logger.info(f"synchronized {len(epochs)} epochs ({dropped} GPS ticks outside the common span)")
    return epochs


class StreamSynchronizer:
    """Incremental form of synchronize_streams.

    Push samples as they arrive, then pop_ready() returns every epoch whose
    brackets are complete. finish() flushes the rest once input has ended.
    The epochs produced equal the batch result for the same input.
    """

    def __init__(self, params: NoiseParams):
        self.params = params
        self._gps: List[GpsFix] = []
        self._imu: List[VelocityInput] = []
        self._imu_t: List[float] = []
        self._ix: List[CandidateSet] = []
        self._ix_t: List[float] = []
        self._next = 0
        self.dropped = 0

    @staticmethod
    def _check_order(name: str, last: Optional[float], t: float) -> None:
        if last is not None and t <= last:
            raise InvalidInputError(f"{name} is not time-sorted: t={t!r} after t={last!r}")

    def push_gps(self, fix: GpsFix) -> None:
        self._check_order("GPS stream", self._gps[-1].t if self._gps else None, fix.t)
        self._gps.append(fix)

    def push_imu(self, vel: VelocityInput) -> None:
        self._check_order("IMU stream", self._imu_t[-1] if self._imu_t else None, vel.t)
        self._imu.append(vel)
        self._imu_t.append(vel.t)

    def push_ix(self, frame: CandidateSet) -> None:
        self._check_order("ix stream", self._ix_t[-1] if self._ix_t else None, frame.t)
        self._ix.append(frame)
        self._ix_t.append(frame.t)

    def _covered(self, times: List[float], t: float) -> bool:
        return bool(times) and times[-1] >= t - KNOT_TOLERANCE

    def _emit(self, use_ix_span: bool) -> RawEpoch:
        fix = self._gps[self._next]
        self._next += 1
        epoch = _align_tick(fix, self._imu_t, self._imu, self._ix_t, self._ix, self.params, use_ix_span)
        if epoch is None:
            self.dropped += 1
        return epoch

    def pop_ready(self) -> List[RawEpoch]:
        """Epochs whose GPS tick is already covered by both the IMU and ix streams"""
        ready = []
        while self._next < len(self._gps):
            t = self._gps[self._next].t
            if not (self._covered(self._imu_t, t) and self._covered(self._ix_t, t)):
                break
            epoch = self._emit(use_ix_span=True)
            if epoch is not None:
                ready.append(epoch)
        return ready

    def finish(self) -> List[RawEpoch]:
        """Flush the remaining ticks; ticks past a stream's end are dropped"""
        remaining = []
        use_ix_span = bool(self._ix)
        while self._next < len(self._gps):
            epoch = self._emit(use_ix_span)
            if epoch is not None:
                remaining.append(epoch)
        if self.dropped:
            logger.info(f"stream synchronizer dropped {self.dropped} GPS ticks outside the common span")
        return remaining
