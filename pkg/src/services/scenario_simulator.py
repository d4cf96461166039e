"""
Synthetic scenarios: a constant-speed drive along a waypoint polyline plus the
GPS, IMU and ix-node streams observed on it.

Each sensor draws from its own child stream of SeedSequence(seed), and every
random number of a stream is drawn up front in a fixed order, so a stream only
depends on (scenario, params, seed).
"""

from typing import Dict, List, Tuple

import numpy as np

from src.exceptions import InvalidInputError
from src.models import (
    CandidateSet,
    GpsFix,
    MapPoint,
    NoiseParams,
    ScenarioSpec,
    SensorStreams,
    Trajectory,
    VelocityInput,
)
from src.services.noise_model import ix_longitudinal_std
from src.utils.geo import node_distances
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

PRNG_NAME = "PCG64"

# Child stream ids of SeedSequence(seed)
GPS_STREAM = 0
IMU_STREAM = 1
IX_STREAM = 2


def sensor_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def prng_metadata(spec: ScenarioSpec) -> Dict:
    """Everything needed to regenerate a scenario bit for bit"""
    return {
        "prng": PRNG_NAME,
        "numpy_version": np.__version__,
        "seed": spec.seed,
        "streams": {"gps": GPS_STREAM, "imu": IMU_STREAM, "ix": IX_STREAM},
        "scenario": spec.model_dump(mode="json"),
    }


def sample_times(spec: ScenarioSpec, rate: float) -> Tuple[np.ndarray, np.ndarray]:
    """(timestamps, elapsed) of a sensor running at `rate` over the scenario.

    Timestamps are quantized to microseconds so that sensors sharing a tick
    agree exactly.
    """
    n = int(np.floor(spec.duration * rate + 1e-9)) + 1
    elapsed = np.arange(n) / rate
    return np.round(spec.start_time + elapsed, 6), elapsed


def _polyline(spec: ScenarioSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(vertices, unit directions, segment lengths, cumulative arc length)"""
    pts = np.array([[p.x, p.y] for p in spec.waypoints], dtype=float)
    if pts.shape[0] < 2:
        raise InvalidInputError(f"a trajectory needs at least 2 waypoints, got {pts.shape[0]}")
    if spec.loop_path:
        pts = np.vstack([pts, pts[:1]])
    seg = np.diff(pts, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lengths == 0.0):
        i = int(np.flatnonzero(lengths == 0.0)[0])
        raise InvalidInputError(f"waypoints {i} and {i + 1} coincide (zero-length segment)")
    unit = seg / lengths[:, None]
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    return pts, unit, lengths, cum


def generate_trajectory(spec: ScenarioSpec) -> Trajectory:
    """Constant-speed traversal of the waypoints sampled at imu_rate.

    Without loop_path the vehicle stops at the last waypoint and stays there
    with zero velocity; with loop_path it keeps circling the closed polygon.
    A sample exactly on a corner already belongs to the next segment.
    """
    pts, unit, _, cum = _polyline(spec)
    total = cum[-1]
    t, elapsed = sample_times(spec, spec.imu_rate)
    s = spec.speed * elapsed

    if spec.loop_path:
        arc = np.mod(s, total)
        moving = np.ones_like(s, dtype=bool)
    else:
        arc = np.minimum(s, total)
        moving = s < total

    n_seg = unit.shape[0]
    idx = np.clip(np.searchsorted(cum, arc, side="right") - 1, 0, n_seg - 1)
    pos = pts[idx] + (arc - cum[idx])[:, None] * unit[idx]
    vel = np.where(moving[:, None], unit[idx] * spec.speed, 0.0)
    heading = np.arctan2(unit[idx, 1], unit[idx, 0])

    if not spec.loop_path and total / spec.speed < spec.duration:
        logger.info(f"path ends after {total / spec.speed:.1f}s, vehicle parked for the rest of the run")
    return Trajectory(t=t, pos=pos, vel=vel, heading=heading)


def sample_truth(traj: Trajectory, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truth (pos, vel, heading) at arbitrary times inside the trajectory span.

    Positions are interpolated (exact on trajectory samples); velocity and
    heading are held from the latest sample at or before each time.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < traj.t[0] - 1e-9 or times[-1] > traj.t[-1] + 1e-9):
        raise InvalidInputError("requested truth samples fall outside the trajectory span")
    pos = np.column_stack((np.interp(times, traj.t, traj.pos[:, 0]),
                           np.interp(times, traj.t, traj.pos[:, 1])))
    idx = np.clip(np.searchsorted(traj.t, times + 1e-9, side="right") - 1, 0, len(traj) - 1)
    return pos, traj.vel[idx], traj.heading[idx]


def _in_intervals(elapsed: np.ndarray, intervals: List[Tuple[float, float]]) -> np.ndarray:
    mask = np.zeros(elapsed.shape, dtype=bool)
    for start, end in intervals:
        mask |= (elapsed >= start) & (elapsed <= end)
    return mask


def simulate_gps(traj: Trajectory, spec: ScenarioSpec, params: NoiseParams) -> List[GpsFix]:
    """Noisy fixes at gps_rate; inside tunnels the noise is amplified and fixes drop out.

    Dropped fixes keep their tick with pos=None.
    """
    rng = sensor_rng(spec.seed, GPS_STREAM)
    t, elapsed = sample_times(spec, spec.gps_rate)
    truth, _, _ = sample_truth(traj, t)

    noise = rng.standard_normal((t.size, 2))
    drop_draw = rng.random(t.size)

    tunnel = _in_intervals(elapsed, spec.tunnel_intervals)
    scale = spec.noise_scale * np.where(tunnel, spec.tunnel_noise_factor, 1.0)
    fixes = truth + noise * np.array([params.sigma_x_gps, params.sigma_y_gps]) * scale[:, None]
    dropped = tunnel & (drop_draw < spec.tunnel_drop_prob)

    stream = [
        GpsFix(t=float(ti), pos=None if lost else MapPoint(x=float(p[0]), y=float(p[1])))
        for ti, p, lost in zip(t, fixes, dropped)
    ]
    logger.debug(f"GPS: {t.size} ticks, {int(tunnel.sum())} in tunnels, {int(dropped.sum())} without fix")
    return stream


def simulate_imu(traj: Trajectory, vel_sigma: float, seed: int,
                 bias_sigma: float = 0.0, noise_scale: float = 1.0) -> List[VelocityInput]:
    """Truth velocity at every trajectory sample plus white noise and one constant bias per axis"""
    rng = sensor_rng(seed, IMU_STREAM)
    bias = rng.standard_normal(2) * bias_sigma * noise_scale
    noise = rng.standard_normal((len(traj), 2)) * vel_sigma * noise_scale
    vel = traj.vel + bias + noise
    if bias_sigma > 0:
        logger.debug(f"IMU bias for seed {seed}: ({bias[0]:.4f}, {bias[1]:.4f}) m/s")
    return [VelocityInput(vx=float(v[0]), vy=float(v[1]), t=float(ti)) for ti, v in zip(traj.t, vel)]


def simulate_ix(traj: Trajectory, spec: ScenarioSpec, params: NoiseParams) -> List[CandidateSet]:
    """Node detections at ix_rate.

    In range and not occluded, the vehicle shows up with radial noise f(d_ix)
    along the node-to-vehicle ray and sigma_y_ix across it. Clutter is
    Poisson(clutter_rate) points uniform in the detection disc. Candidate
    order within a frame is shuffled.
    """
    rng = sensor_rng(spec.seed, IX_STREAM)
    t, _ = sample_times(spec, spec.ix_rate)
    truth, _, _ = sample_truth(traj, t)
    n = t.size

    node = params.node
    dist = node_distances(truth, node)
    in_range = dist <= params.detection_range

    noise = rng.standard_normal((n, 2))
    occluded = rng.random(n) < spec.occlusion_prob
    n_clutter = rng.poisson(spec.clutter_rate, n)
    clutter_draw = rng.random((int(n_clutter.sum()), 2))
    order_keys = rng.random(int(n_clutter.sum()) + n)

    offset = truth - np.array([node.x, node.y])
    safe = np.where(dist > 0, dist, 1.0)
    radial = np.where((dist > 0)[:, None], offset / safe[:, None], np.array([1.0, 0.0]))
    normal = np.column_stack((-radial[:, 1], radial[:, 0]))
    sigma_r = np.asarray(ix_longitudinal_std(dist, params)) * spec.noise_scale
    sigma_t = params.sigma_y_ix * spec.noise_scale
    detected = truth + (noise[:, 0] * sigma_r)[:, None] * radial + (noise[:, 1] * sigma_t)[:, None] * normal

    r = params.detection_range * np.sqrt(clutter_draw[:, 0])
    phi = 2.0 * np.pi * clutter_draw[:, 1]
    clutter = np.column_stack((node.x + r * np.cos(phi), node.y + r * np.sin(phi)))

    stream = []
    c0, k0 = 0, 0
    for i in range(n):
        c1 = c0 + int(n_clutter[i])
        keys = order_keys[k0:k0 + c1 - c0 + 1]
        k0 += c1 - c0 + 1
        points = []
        if in_range[i]:
            points = [(keys[0], detected[i])] if not occluded[i] else []
            points += [(keys[j + 1], clutter[c0 + j]) for j in range(c1 - c0)]
            points.sort(key=lambda item: item[0])
        stream.append(CandidateSet(
            t=float(t[i]),
            candidates=[MapPoint(x=float(p[0]), y=float(p[1])) for _, p in points],
        ))
        c0 = c1

    logger.debug(f"ix: {n} frames, {int(in_range.sum())} in range, {int((in_range & occluded).sum())} occluded")
    return stream


def simulate_scenario(spec: ScenarioSpec, params: NoiseParams) -> Tuple[Trajectory, SensorStreams]:
    """Ground truth and all three sensor streams of one scenario"""
    traj = generate_trajectory(spec)
    streams = SensorStreams(
        gps=simulate_gps(traj, spec, params),
        imu=simulate_imu(traj, spec.vel_sigma, spec.seed, spec.imu_bias_sigma, spec.noise_scale),
        ix=simulate_ix(traj, spec, params),
    )
    logger.info(
        f"simulated seed={spec.seed}: {len(traj)} truth samples, {len(streams.gps)} GPS ticks, "
        f"{len(streams.imu)} IMU samples, {len(streams.ix)} ix frames"
    )
    return traj, streams
