"""
Error metric and comparison report tests
"""

import math

import numpy as np
import pandas as pd
import pytest

from src.exceptions import InvalidInputError
from src.models import (
    CandidateSet,
    CaseWindow,
    ErrorComponent,
    ErrorSeries,
    EstimateSeries,
    GpsFix,
    MapPoint,
    NoiseParams,
    RawEpoch,
    SensorStreams,
    Trajectory,
    VelocityInput,
)
from src.services.metrics_service import (
    FUSION,
    GPS,
    IX,
    compare_report,
    detection_windows,
    format_report_table,
    gps_estimates,
    histogram,
    histogram_frame,
    ix_only_estimates,
    position_errors,
    report_frame,
    summarize,
    summarize_values,
    trajectory_error_table,
    windowed_rms,
)

T = np.round(np.arange(101) * 0.1, 6)


def _eastward_truth(t=T) -> Trajectory:
    n = t.size
    return Trajectory(t=t, pos=np.column_stack((t, np.zeros(n))),
                      vel=np.tile([1.0, 0.0], (n, 1)), heading=np.zeros(n))


def _estimates(source, t, offset) -> EstimateSeries:
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (t.size, 2))
    return EstimateSeries(source=source, t=t, pos=np.column_stack((t, np.zeros(t.size))) + offset)


def _series(values) -> ErrorSeries:
    values = np.asarray(values, dtype=float)
    zeros = np.zeros(values.size)
    return ErrorSeries(t=np.arange(values.size) * 0.1, longitudinal=values, lateral=zeros, total=np.abs(values))


class TestPositionErrors:
    def test_exact_estimates(self):
        errors = position_errors(_estimates(FUSION, T, [0.0, 0.0]), _eastward_truth())
        assert np.all(errors.total == 0.0)

    def test_lateral_offset_heading_east(self):
        errors = position_errors(_estimates(GPS, T, [0.0, 1.0]), _eastward_truth())
        np.testing.assert_allclose(errors.longitudinal, 0.0, atol=1e-12)
        np.testing.assert_allclose(errors.lateral, 1.0)

    def test_three_four_five(self):
        errors = position_errors(_estimates(GPS, T, [3.0, 4.0]), _eastward_truth())
        np.testing.assert_allclose(errors.total, 5.0)

    def test_heading_north_swaps_axes(self):
        n = T.size
        truth = Trajectory(t=T, pos=np.zeros((n, 2)), vel=np.zeros((n, 2)), heading=np.full(n, math.pi / 2))
        est = EstimateSeries(source=GPS, t=T, pos=np.tile([1.0, 2.0], (n, 1)))
        errors = position_errors(est, truth)
        np.testing.assert_allclose(errors.longitudinal, 2.0)
        np.testing.assert_allclose(errors.lateral, -1.0)

    def test_map_axes_when_not_heading_aware(self):
        errors = position_errors(_estimates(GPS, T, [3.0, -4.0]), _eastward_truth(), heading_aware=False)
        np.testing.assert_allclose(errors.longitudinal, 3.0)
        np.testing.assert_allclose(errors.lateral, -4.0)
        assert not errors.heading_aware

    def test_estimates_outside_truth_dropped(self):
        t = np.array([-1.0, 0.0, 5.0, 11.0])
        errors = position_errors(_estimates(GPS, t, [0.0, 0.0]), _eastward_truth())
        assert len(errors) == 2
        assert errors.dropped == 2


class TestSummaries:
    def test_constant_error(self):
        stats = summarize(_series([2.0] * 10))
        assert (stats.mean, stats.std, stats.rmse, stats.n) == (2.0, 0.0, 2.0, 10)

    def test_zero_and_two(self):
        stats = summarize_values(np.array([0.0, 2.0]))
        assert stats.mean == 1.0
        assert stats.rmse == pytest.approx(math.sqrt(2.0))

    def test_sample_std(self):
        stats = summarize_values(np.array([1.0, 1.0, 1.0, 3.0]))
        assert stats.mean == 1.5
        assert stats.std == pytest.approx(1.0)
        assert stats.max == 3.0

    def test_signed_components_use_absolute_values(self):
        stats = summarize(_series([-1.0, 1.0]), ErrorComponent.LONGITUDINAL)
        assert stats.mean == 1.0

    def test_single_value_has_zero_std(self):
        assert summarize_values(np.array([4.0])).std == 0.0

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            summarize_values(np.array([]))

    def test_trajectory_table(self):
        table = trajectory_error_table(_series([3.0, -3.0]))
        assert list(table["component"]) == ["long", "lat", "total"]
        assert list(table["mean"]) == [3.0, 0.0, 3.0]


class TestHistogram:
    def test_counts(self):
        assert histogram(_series([0.1, 0.2, 0.6]), 0.5).counts == [2, 1]

    def test_empty(self):
        assert histogram(_series([]), 0.5).counts == []

    def test_lower_closed_bins(self):
        assert histogram(_series([0.5]), 0.5).counts == [0, 1]

    def test_invalid_width(self):
        with pytest.raises(InvalidInputError):
            histogram(_series([1.0]), 0.0)

    def test_frame(self):
        frame = histogram_frame({GPS: histogram(_series([0.1, 0.6]), 0.5)})
        assert list(frame["bin_start"]) == [0.0, 0.5]
        assert list(frame["count"]) == [1, 1]


class TestWindowedRms:
    def test_trailing_window(self):
        series = ErrorSeries(
            t=np.array([0.0, 0.5, 1.0, 1.5]),
            longitudinal=np.array([1.0, 1.0, 1.0, 3.0]),
            lateral=np.zeros(4),
            total=np.array([1.0, 1.0, 1.0, 3.0]),
        )
        rms = windowed_rms(series, 1.0)
        np.testing.assert_allclose(rms, [1.0, 1.0, 1.0, math.sqrt(5.0)])

    def test_empty_series(self):
        assert windowed_rms(_series([]), 1.0).size == 0


class TestSources:
    def test_detection_windows(self):
        t = np.arange(201) * 1.0
        truth = Trajectory(t=t, pos=np.column_stack((t - 100.0, np.zeros(t.size))),
                           vel=np.tile([1.0, 0.0], (t.size, 1)), heading=np.zeros(t.size))
        windows = detection_windows(truth, NoiseParams(node_x=0.0, node_y=0.0))
        assert windows == [CaseWindow(name="case1", start=50.0, end=150.0)]

    def test_gps_estimates_skip_missing_fixes(self):
        streams = SensorStreams(gps=[GpsFix(t=0.0, pos=MapPoint(x=1.0, y=2.0)), GpsFix(t=0.1)])
        est = gps_estimates(streams)
        assert est.source == GPS
        assert list(est.t) == [0.0]

    def test_ix_only_picks_nearest_to_fused(self):
        params = NoiseParams(node_x=0.0, node_y=0.0)
        vel = VelocityInput(vx=0.0, vy=0.0, t=0.1)
        epochs = [
            RawEpoch(t=0.1, vel=vel, candidates=CandidateSet(t=0.1, candidates=[
                MapPoint(x=4.0, y=0.0), MapPoint(x=1.0, y=0.5)])),
            RawEpoch(t=0.2, vel=vel.model_copy(update={"t": 0.2}), candidates=CandidateSet(t=0.2, candidates=[
                MapPoint(x=30.0, y=0.0)])),
            RawEpoch(t=0.3, vel=vel.model_copy(update={"t": 0.3}), candidates=CandidateSet(t=0.3)),
        ]
        fused = EstimateSeries(source=FUSION, t=np.array([0.1, 0.2, 0.3]), pos=np.tile([1.0, 0.0], (3, 1)))
        est = ix_only_estimates(epochs, fused, params)
        assert est.source == IX
        np.testing.assert_array_equal(est.t, [0.1])
        np.testing.assert_array_equal(est.pos, [[1.0, 0.5]])


class TestCompareReport:
    def setup_method(self):
        self.truth = _eastward_truth()
        gps_offset = np.where((T <= 2.05)[:, None], [0.0, 1.0], [0.0, 3.0])
        self.gps = _estimates(GPS, T, gps_offset)
        self.ix = _estimates(IX, T[5:], [0.5, 0.0])
        self.fusion = _estimates(FUSION, T, [0.0, 0.0])
        self.cases = [
            CaseWindow(name="case1", start=0.0, end=2.0),
            CaseWindow(name="case2", start=5.0, end=6.0),
            CaseWindow(name="case3", start=20.0, end=21.0),
        ]

    def test_average_is_unweighted_mean_of_cases(self):
        report = compare_report(self.gps, self.ix, self.fusion, self.truth, self.cases)
        assert report.row("case1", GPS).n_epochs == 16
        assert report.row("case2", GPS).n_epochs == 11
        assert report.average_mean[GPS] == pytest.approx(2.0)
        assert report.overall[GPS].mean == pytest.approx((16 * 1.0 + 11 * 3.0) / 27)
        assert report.average_mean[FUSION] == 0.0
        assert report.average_mean[IX] == pytest.approx(0.5)

    def test_empty_case_has_no_stats(self):
        report = compare_report(self.gps, self.ix, self.fusion, self.truth, self.cases)
        row = report.row("case3", FUSION)
        assert row.n_epochs == 0 and row.stats is None

    def test_identical_sources_identical_stats(self):
        a = _estimates(GPS, T, [0.2, 0.1])
        b = _estimates(IX, T, [0.2, 0.1])
        c = _estimates(FUSION, T, [0.2, 0.1])
        report = compare_report(a, b, c, self.truth, self.cases[:2])
        assert report.overall[GPS] == report.overall[IX] == report.overall[FUSION]

    def test_duplicate_sources_rejected(self):
        with pytest.raises(InvalidInputError):
            compare_report(self.gps, self.gps, self.fusion, self.truth, self.cases)

    def test_report_frame_layout(self):
        report = compare_report(self.gps, self.ix, self.fusion, self.truth, self.cases)
        frame = report_frame(report)
        assert list(frame["case"].unique()) == ["case1", "case2", "case3", "Average", "Overall"]
        average = frame[(frame["case"] == "Average") & (frame["source"] == GPS)].iloc[0]
        assert average["n_epochs"] == 2
        assert pd.isna(frame[(frame["case"] == "case3")]["mean"]).all()

    def test_text_table(self):
        report = compare_report(self.gps, self.ix, self.fusion, self.truth, self.cases)
        text = format_report_table(report)
        assert "GPS mean" in text and "Average" in text
        assert "2.000" in text
