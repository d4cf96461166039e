"""
Gating and stream synchronization tests
"""

import numpy as np
import pytest

from src.exceptions import InvalidInputError
from src.models import (
    CandidateSet,
    GpsFix,
    GpsGateMode,
    MapPoint,
    Measurement,
    MeasurementSource,
    NoiseParams,
    VehicleState,
    VelocityInput,
)
from src.services.data_association import (
    StreamSynchronizer,
    gate_candidates,
    gate_gps,
    gate_threshold,
    mahalanobis_sq,
    pair_candidates,
    select_candidate,
    synchronize_streams,
)

PARAMS = NoiseParams(node_x=0.0, node_y=0.0)


def _predicted(x=0.0, y=0.0) -> VehicleState:
    return VehicleState(pos=MapPoint(x=x, y=y), cov=np.eye(2), t=0.0)


def _gps(x, y, source=MeasurementSource.GPS) -> Measurement:
    return Measurement(pos=MapPoint(x=x, y=y), t=0.0, source=source, noise=np.eye(2))


def _frame(t, *points) -> CandidateSet:
    return CandidateSet(t=t, candidates=[MapPoint(x=x, y=y) for x, y in points])


class TestGpsGate:
    def test_threshold(self):
        assert gate_threshold(0.99) == pytest.approx(9.21, abs=0.01)

    def test_mahalanobis(self):
        assert mahalanobis_sq(_gps(10.0, 0.0), _predicted()) == pytest.approx(50.0)
        assert mahalanobis_sq(_gps(2.0, 0.0), _predicted()) == pytest.approx(2.0)

    def test_chi2_gate(self):
        assert gate_gps(_gps(10.0, 0.0), _predicted(), PARAMS) is None
        fix = _gps(2.0, 0.0)
        assert gate_gps(fix, _predicted(), PARAMS) is fix

    def test_radius_gate(self):
        params = PARAMS.model_copy(update={"gps_gate": GpsGateMode.RADIUS})
        assert gate_gps(_gps(4.0, 3.0), _predicted(), params) is not None
        assert gate_gps(_gps(4.0, 3.1), _predicted(), params) is None

    def test_wrong_source_rejected(self):
        with pytest.raises(InvalidInputError):
            gate_gps(_gps(0.0, 0.0, MeasurementSource.IX), _predicted(), PARAMS)


class TestCandidateGate:
    def test_drops_far_candidates(self):
        kept = gate_candidates(_frame(0.0, (1.0, 0.0), (6.0, 0.0), (0.0, -5.0)), _predicted(), PARAMS)
        assert [(c.x, c.y) for c in kept.candidates] == [(1.0, 0.0), (0.0, -5.0)]

    def test_outside_detection_range(self):
        params = PARAMS.model_copy(update={"detection_range": 2.0})
        kept = gate_candidates(_frame(0.0, (3.0, 0.0)), _predicted(3.0, 0.0), params)
        assert kept.candidates == []

    def test_tighter_threshold_never_keeps_more(self):
        rng = np.random.default_rng(11)
        frame = _frame(0.0, *[tuple(p) for p in rng.uniform(-8, 8, size=(40, 2))])
        sizes = [
            len(gate_candidates(frame, _predicted(), PARAMS.model_copy(update={"d_thresh": d})).candidates)
            for d in (1.0, 2.0, 4.0, 8.0)
        ]
        assert sizes == sorted(sizes)

    def test_select_nearest(self):
        chosen = select_candidate(_frame(0.0, (3.0, 0.0), (0.0, 1.0), (2.0, 2.0)), _predicted())
        assert (chosen.x, chosen.y) == (0.0, 1.0)

    def test_tie_goes_to_first(self):
        chosen = select_candidate(_frame(0.0, (1.0, 0.0), (0.0, 1.0)), _predicted())
        assert (chosen.x, chosen.y) == (1.0, 0.0)

    def test_empty_selects_nothing(self):
        assert select_candidate(_frame(0.0), _predicted()) is None


class TestPairing:
    def test_greedy_nearest(self):
        pairs = pair_candidates(_frame(0.0, (0.0, 0.0), (10.0, 0.0)),
                                _frame(0.1, (10.5, 0.0), (0.2, 0.0)), d_thresh=5.0)
        assert pairs == [(0, 1), (1, 0)]

    def test_far_candidates_unpaired(self):
        pairs = pair_candidates(_frame(0.0, (0.0, 0.0), (10.0, 0.0)),
                                _frame(0.1, (0.2, 0.0), (30.0, 0.0)), d_thresh=5.0)
        assert pairs == [(0, 0)]


def _imu(times, vx=lambda t: t, vy=lambda t: 0.0):
    return [VelocityInput(vx=vx(t), vy=vy(t), t=t) for t in times]


class TestSynchronize:
    def test_midpoint_interpolation(self):
        gps = [GpsFix(t=0.05, pos=MapPoint(x=0.0, y=0.0))]
        imu = [VelocityInput(vx=1.0, vy=2.0, t=0.0), VelocityInput(vx=3.0, vy=6.0, t=0.1)]
        ix = [_frame(0.0, (0.0, 0.0)), _frame(0.1, (1.0, 1.0))]
        (epoch,) = synchronize_streams(gps, imu, ix, PARAMS)
        assert epoch.vel.vx == pytest.approx(2.0)
        assert epoch.vel.vy == pytest.approx(4.0)
        assert epoch.vel.t == 0.05
        (cand,) = epoch.candidates.candidates
        assert (cand.x, cand.y) == (pytest.approx(0.5), pytest.approx(0.5))

    def test_ticks_outside_span_dropped(self):
        gps = [GpsFix(t=t, pos=MapPoint(x=0.0, y=0.0)) for t in (0.0, 0.1, 0.2, 0.3)]
        imu = _imu([0.05, 0.1, 0.15, 0.2, 0.25])
        ix = [_frame(0.0), _frame(0.25)]
        epochs = synchronize_streams(gps, imu, ix, PARAMS)
        assert [e.t for e in epochs] == [0.1, 0.2]

    def test_knot_values_exact(self):
        gps = [GpsFix(t=0.1, pos=MapPoint(x=1.0, y=2.0))]
        imu = _imu([0.0, 0.1, 0.2], vx=lambda t: 7.0 * t + 0.3)
        ix = [_frame(0.0, (5.0, 5.0)), _frame(0.1, (5.123456789, 4.0)), _frame(0.2, (6.0, 3.0))]
        (epoch,) = synchronize_streams(gps, imu, ix, PARAMS)
        assert epoch.vel.vx == imu[1].vx
        assert epoch.candidates.candidates[0].x == 5.123456789
        assert epoch.gps_fix == MapPoint(x=1.0, y=2.0)

    def test_missing_fix_carried_through(self):
        gps = [GpsFix(t=0.1)]
        epochs = synchronize_streams(gps, _imu([0.0, 0.2]), [_frame(0.0), _frame(0.2)], PARAMS)
        assert epochs[0].gps_fix is None

    def test_unsorted_input_rejected(self):
        gps = [GpsFix(t=0.2), GpsFix(t=0.1)]
        with pytest.raises(InvalidInputError):
            synchronize_streams(gps, _imu([0.0, 0.3]), [], PARAMS)

    def test_repeated_timestamp_rejected(self):
        with pytest.raises(InvalidInputError):
            synchronize_streams([GpsFix(t=0.1)], _imu([0.0, 0.0, 0.3]), [], PARAMS)

    def test_empty_gps(self):
        assert synchronize_streams([], _imu([0.0, 1.0]), [_frame(0.0)], PARAMS) == []

    def test_empty_ix_stream_does_not_restrict(self):
        gps = [GpsFix(t=t) for t in (0.0, 0.1, 0.2)]
        epochs = synchronize_streams(gps, _imu([0.0, 0.2]), [], PARAMS)
        assert len(epochs) == 3
        assert all(e.candidates.candidates == [] for e in epochs)

    def test_unpaired_candidate_dropped(self):
        gps = [GpsFix(t=0.05)]
        ix = [_frame(0.0, (0.0, 0.0), (20.0, 0.0)), _frame(0.1, (0.1, 0.0))]
        (epoch,) = synchronize_streams(gps, _imu([0.0, 0.1]), ix, PARAMS)
        assert len(epoch.candidates.candidates) == 1
        assert epoch.candidates.candidates[0].x == pytest.approx(0.05)


class TestStreamSynchronizer:
    def _streams(self):
        rng = np.random.default_rng(5)
        gps = [GpsFix(t=round(0.1 * k, 6), pos=MapPoint(x=float(k), y=0.0)) for k in range(30)]
        imu = _imu([round(0.01 * k + 0.03, 6) for k in range(280)])
        ix = [
            CandidateSet(t=round(0.05 * k, 6),
                         candidates=[MapPoint(x=0.1 * k + e, y=1.0) for e in rng.normal(0, 0.05, 1)])
            for k in range(55)
        ]
        return gps, imu, ix

    def test_matches_batch(self):
        gps, imu, ix = self._streams()
        batch = synchronize_streams(gps, imu, ix, PARAMS)

        sync = StreamSynchronizer(PARAMS)
        incremental = []
        # interleave pushes roughly in arrival order
        events = sorted(
            [(g.t, 0, g) for g in gps] + [(v.t, 1, v) for v in imu] + [(c.t, 2, c) for c in ix],
            key=lambda e: (e[0], e[1]),
        )
        push = {0: sync.push_gps, 1: sync.push_imu, 2: sync.push_ix}
        for _, kind, item in events:
            push[kind](item)
            incremental.extend(sync.pop_ready())
        incremental.extend(sync.finish())

        assert incremental == batch
        assert sync.dropped == len(gps) - len(batch)

    def test_out_of_order_push_rejected(self):
        sync = StreamSynchronizer(PARAMS)
        sync.push_imu(VelocityInput(vx=0.0, vy=0.0, t=1.0))
        with pytest.raises(InvalidInputError):
            sync.push_imu(VelocityInput(vx=0.0, vy=0.0, t=1.0))

    def test_waits_for_coverage(self):
        sync = StreamSynchronizer(PARAMS)
        sync.push_gps(GpsFix(t=0.1))
        sync.push_imu(VelocityInput(vx=0.0, vy=0.0, t=0.0))
        sync.push_ix(_frame(0.0))
        assert sync.pop_ready() == []
        sync.push_imu(VelocityInput(vx=1.0, vy=0.0, t=0.2))
        sync.push_ix(_frame(0.2))
        (epoch,) = sync.pop_ready()
        assert epoch.vel.vx == pytest.approx(0.5)
