"""
Sensor log reading / writing tests
"""

import json
import math

import numpy as np
import pytest

from src.exceptions import LogParseError, LogValidationError
from src.models import (
    FusionEpochResult,
    LogFrame,
    LogRecord,
    MapPoint,
    NoiseParams,
    RecordKind,
    ScenarioSpec,
    VehicleState,
)
from src.services.log_service import (
    LOG_COLUMNS,
    diagnostics_frame,
    merge_estimates,
    read_log,
    records_from_scenario,
    write_log,
    write_metadata,
)
from src.services.scenario_simulator import simulate_scenario

HEADER = "kind,t,f1,f2,f3,f4,f5\n"


def _write(tmp_path, body: str):
    path = tmp_path / "log.csv"
    path.write_text(HEADER + body, encoding="utf-8")
    return path


class TestWriteLog:
    def test_empty_log_is_header_only(self, tmp_path):
        path = write_log([], tmp_path / "empty.csv")
        assert path.read_text(encoding="utf-8") == HEADER

    def test_number_formats(self, tmp_path):
        records = [
            LogRecord(kind=RecordKind.GPS, t=0.1, payload=(1.0 / 3.0, -2.5)),
            LogRecord(kind=RecordKind.GPS, t=0.2),
        ]
        lines = write_log(records, tmp_path / "log.csv").read_text(encoding="utf-8").splitlines()
        assert lines[1] == "GPS,0.100000,0.33333333333333331,-2.5,,,"
        assert lines[2] == "GPS,0.200000,,,,,"

    def test_round_trip(self, tmp_path):
        records = [
            LogRecord(kind=RecordKind.GT, t=0.0, payload=(1.5, 2.25, 5.0, 0.0, 0.0)),
            LogRecord(kind=RecordKind.GPS, t=0.0, payload=(math.pi, -math.e)),
            LogRecord(kind=RecordKind.IMU, t=0.0, payload=(4.9, 0.1)),
            LogRecord(kind=RecordKind.IX, t=0.0),
            LogRecord(kind=RecordKind.IMU, t=0.01, payload=(5.1, -0.1)),
        ]
        path = write_log(records, tmp_path / "log.csv")
        assert read_log(path).records == records


class TestReadLog:
    def test_ix_frame_with_two_candidates(self, tmp_path):
        path = _write(tmp_path, "IX,0.050000,1,2,,,\nIX,0.050000,3,4,,,\nIX,0.100000,,,,,\n")
        streams = read_log(path).sensor_streams()
        assert len(streams.ix) == 2
        assert streams.ix[0].candidates == [MapPoint(x=1.0, y=2.0), MapPoint(x=3.0, y=4.0)]
        assert streams.ix[1].candidates == []

    def test_gps_tick_without_fix(self, tmp_path):
        streams = read_log(_write(tmp_path, "GPS,0.100000,,,,,\n")).sensor_streams()
        assert streams.gps[0].pos is None

    def test_wrong_arity_names_line(self, tmp_path):
        path = _write(tmp_path, "GPS,0.1,1,2,3,,\n")
        with pytest.raises(LogParseError) as exc:
            read_log(path)
        assert exc.value.line == 2
        assert "line 2" in str(exc.value)

    def test_unknown_kind(self, tmp_path):
        path = _write(tmp_path, "IMU,0.0,1,1,,,\nRADAR,0.1,1,2,,,\n")
        with pytest.raises(LogParseError) as exc:
            read_log(path)
        assert exc.value.line == 3

    def test_non_numeric(self, tmp_path):
        with pytest.raises(LogParseError):
            read_log(_write(tmp_path, "IMU,0.0,fast,1,,,\n"))

    def test_payload_gap(self, tmp_path):
        with pytest.raises(LogParseError):
            read_log(_write(tmp_path, "IMU,0.0,,1,,,\n"))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("kind,time,x,y\nGPS,0.1,1,2\n", encoding="utf-8")
        with pytest.raises(LogParseError) as exc:
            read_log(path)
        assert exc.value.line == 1

    def test_shuffled_gps_times(self, tmp_path):
        path = _write(tmp_path, "GPS,0.200000,1,2,,,\nGPS,0.100000,1,2,,,\n")
        with pytest.raises(LogValidationError) as exc:
            read_log(path)
        assert "line 3" in str(exc.value)

    def test_repeated_ix_time_allowed(self, tmp_path):
        log = read_log(_write(tmp_path, "IX,0.1,1,2,,,\nIX,0.1,3,4,,,\n"))
        assert log.count(RecordKind.IX) == 2

    def test_enu_frame_shifted_on_read(self, tmp_path):
        params = NoiseParams(log_frame=LogFrame.ENU)
        path = _write(tmp_path, "GPS,0.1,277500,4686610,,,\nIMU,0.1,277500,4686610,,,\n")
        log = read_log(path, params)
        assert log.of_kind(RecordKind.GPS)[0].payload == (5.0, 10.0)
        assert log.of_kind(RecordKind.IMU)[0].payload == (277500.0, 4686610.0)

    def test_enu_frame_restored_on_write(self, tmp_path):
        params = NoiseParams(log_frame=LogFrame.ENU)
        records = [LogRecord(kind=RecordKind.GPS, t=0.1, payload=(5.0, 10.0))]
        text = write_log(records, tmp_path / "log.csv", params).read_text(encoding="utf-8")
        assert "GPS,0.100000,277500,4686610,,," in text


class TestLogData:
    def test_ground_truth_removes_lever_arm(self, tmp_path):
        params = NoiseParams(d_gnss=0.5)
        # heading East: the device sits 0.5 m north of the reference point
        path = _write(tmp_path, "GT,0.0,10,20.5,5,0,0\n")
        truth = read_log(path).ground_truth(params)
        np.testing.assert_allclose(truth.pos, [[10.0, 20.0]], atol=1e-12)
        np.testing.assert_allclose(truth.vel, [[5.0, 0.0]])

    def test_no_truth(self, tmp_path):
        assert read_log(_write(tmp_path, "IMU,0.0,1,1,,,\n")).ground_truth(NoiseParams()) is None

    def test_scenario_records_round_trip_truth(self, tmp_path):
        params = NoiseParams()
        spec = ScenarioSpec(duration=2.0, loop_path=True, seed=3)
        traj, streams = simulate_scenario(spec, params)
        path = write_log(records_from_scenario(traj, streams, params), tmp_path / "sim.csv")
        log = read_log(path)
        np.testing.assert_allclose(log.ground_truth(params).pos, traj.pos, atol=1e-9)
        assert log.sensor_streams() == streams

    def test_merge_estimates_replaces_old_rows(self, tmp_path):
        path = _write(tmp_path, "IMU,0.0,1,1,,,\nEST,0.0,9,9,1,1,0\nIMU,0.1,1,1,,,\n")
        log = read_log(path)
        state = VehicleState(pos=MapPoint(x=1.0, y=2.0), cov=np.diag([0.5, 0.25]), t=0.1)
        result = FusionEpochResult(predicted=state, final=state)
        merged = merge_estimates(log, [result])
        est = [r for r in merged if r.kind == RecordKind.EST]
        assert est == [LogRecord(kind=RecordKind.EST, t=0.1, payload=(1.0, 2.0, 0.5, 0.25, 0.0))]
        assert merged[-1].kind == RecordKind.EST

    def test_metadata_sidecar(self, tmp_path):
        path = write_metadata(tmp_path / "log.csv", {"seed": 3, "prng": "PCG64"})
        assert path.name == "log.csv.meta.json"
        assert json.loads(path.read_text(encoding="utf-8")) == {"prng": "PCG64", "seed": 3}


class TestDiagnostics:
    def test_skipped_updates_are_nan(self):
        predicted = VehicleState(pos=MapPoint(x=0.0, y=0.0), cov=np.eye(2), t=0.1)
        final = VehicleState(pos=MapPoint(x=0.5, y=0.0), cov=0.5 * np.eye(2), t=0.1)
        result = FusionEpochResult(
            predicted=predicted,
            final=final,
            ix_innovation=np.array([1.0, 0.0]),
            ix_innovation_cov=2.0 * np.eye(2),
            ix_gain=0.5 * np.eye(2),
        )
        frame = diagnostics_frame([result])
        row = frame.iloc[0]
        assert row["gps_used"] == 0 and row["ix_used"] == 1
        assert math.isnan(row["gps_nu_x"])
        assert row["ix_K_xx"] == 0.5
        assert row["trace"] == pytest.approx(1.0)
        assert "t" in frame.columns and "pred_trace" in frame.columns


def test_columns():
    assert LOG_COLUMNS == ["kind", "t", "f1", "f2", "f3", "f4", "f5"]
