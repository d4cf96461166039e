"""
Multiplexed CSV sensor logs.

Header is `kind,t,f1,f2,f3,f4,f5`. Column map per kind:

    GT   x, y, vx, vy, heading      raw ground-truth device position
    GPS  x, y                       empty fields: tick without fix
    IMU  vx, vy
    IX   x, y                       one row per candidate, empty fields: empty frame
    EST  x, y, cov_xx, cov_yy, cov_xy

`t` is written with 6 decimals and payload values with 17 significant
digits. Separator `,`, decimal point `.`, newline `\\n`, UTF-8.
"""

import json
import re
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.exceptions import LogParseError, LogValidationError
from src.models import (
    CandidateSet,
    EstimateSeries,
    FusionEpochResult,
    GpsFix,
    LogFrame,
    LogRecord,
    MapPoint,
    NoiseParams,
    RecordKind,
    SensorStreams,
    Trajectory,
    VelocityInput,
)
from src.utils.geo import lever_arm_offset
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

LOG_COLUMNS = ["kind", "t", "f1", "f2", "f3", "f4", "f5"]
PAYLOAD_COLUMNS = LOG_COLUMNS[2:]

# Payload slots holding an (x, y) position that the map origin shifts
_POSITION_KINDS = (RecordKind.GT, RecordKind.GPS, RecordKind.IX, RecordKind.EST)

PathLike = Union[str, Path]


def _format_row(record: LogRecord) -> List[str]:
    values = [f"{v:.17g}" for v in record.payload]
    return [record.kind.value, f"{record.t:.6f}"] + values + [""] * (len(PAYLOAD_COLUMNS) - len(values))


def _shift(record: LogRecord, dx: float, dy: float) -> LogRecord:
    if record.kind not in _POSITION_KINDS or not record.payload:
        return record
    payload = (record.payload[0] + dx, record.payload[1] + dy) + record.payload[2:]
    return LogRecord(kind=record.kind, t=record.t, payload=payload)


def write_log(records: Sequence[LogRecord], path: PathLike, params: Optional[NoiseParams] = None) -> Path:
    """Write records in the given order.

    With an ENU log frame, map-frame positions are moved back to ENU.
    """
    path = Path(path)
    if params is not None and params.log_frame == LogFrame.ENU:
        records = [_shift(r, params.x_o, params.y_o) for r in records]
    frame = pd.DataFrame([_format_row(r) for r in records], columns=LOG_COLUMNS, dtype=str)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"wrote {len(records)} records to {path}")
    return path


def _parse_row(line: int, row: Sequence) -> LogRecord:
    cells = ["" if not isinstance(v, str) else v.strip() for v in row]
    kind_raw, t_raw, payload_raw = cells[0], cells[1], cells[2:]
    try:
        kind = RecordKind(kind_raw)
    except ValueError:
        raise LogParseError(line, f"unknown record kind {kind_raw!r}") from None

    filled = [i for i, v in enumerate(payload_raw) if v != ""]
    if filled and filled[-1] != len(filled) - 1:
        raise LogParseError(line, f"{kind.value} row has a gap in its payload fields")
    try:
        t = float(t_raw)
        payload = tuple(float(payload_raw[i]) for i in filled)
    except ValueError:
        raise LogParseError(line, "non-numeric field") from None

    try:
        return LogRecord(kind=kind, t=t, payload=payload)
    except ValidationError as exc:
        message = exc.errors()[0]["msg"]
        raise LogParseError(line, f"{kind.value} row invalid: {message}") from None


def _check_order(records: Sequence[LogRecord]) -> None:
    last: Dict[RecordKind, tuple] = {}
    for index, record in enumerate(records):
        previous = last.get(record.kind)
        if previous is not None:
            t_prev, line_prev = previous
            backwards = record.t < t_prev if record.kind == RecordKind.IX else record.t <= t_prev
            if backwards:
                raise LogValidationError(
                    f"line {index + 2}: {record.kind.value} timestamp {record.t:.6f} does not "
                    f"follow {t_prev:.6f} (line {line_prev})"
                )
        last[record.kind] = (record.t, index + 2)


def read_log(path: PathLike, params: Optional[NoiseParams] = None) -> "LogData":
    """Parse and validate a log; positions come back in the map frame"""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                            skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise LogParseError(1, "missing header") from None
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise LogParseError(int(match.group(1)) if match else 0, str(exc)) from None

    if list(frame.columns) != LOG_COLUMNS:
        raise LogParseError(1, f"header must be {','.join(LOG_COLUMNS)}, got {','.join(map(str, frame.columns))}")

    records = [_parse_row(i + 2, row) for i, row in enumerate(frame.itertuples(index=False, name=None))]
    _check_order(records)

    if params is not None and params.log_frame == LogFrame.ENU:
        records = [_shift(r, -params.x_o, -params.y_o) for r in records]

    logger.info(f"read {len(records)} records from {path}")
    return LogData(records=records)


@dataclass
class LogData:
    """Parsed log; accessors split it back into per-kind streams"""
    records: List[LogRecord] = field(default_factory=list)

    def of_kind(self, kind: RecordKind) -> List[LogRecord]:
        return [r for r in self.records if r.kind == kind]

    def count(self, kind: RecordKind) -> int:
        return sum(1 for r in self.records if r.kind == kind)

    def sensor_streams(self) -> SensorStreams:
        """GPS / IMU / ix streams; ground truth is never part of them"""
        gps = [
            GpsFix(t=r.t, pos=MapPoint(x=r.payload[0], y=r.payload[1]) if r.payload else None)
            for r in self.of_kind(RecordKind.GPS)
        ]
        imu = [VelocityInput(vx=r.payload[0], vy=r.payload[1], t=r.t) for r in self.of_kind(RecordKind.IMU)]
        ix = [
            CandidateSet(t=t, candidates=[MapPoint(x=r.payload[0], y=r.payload[1]) for r in rows if r.payload])
            for t, rows in groupby(self.of_kind(RecordKind.IX), key=lambda r: r.t)
        ]
        return SensorStreams(gps=gps, imu=imu, ix=ix)

    def ground_truth(self, params: NoiseParams) -> Optional[Trajectory]:
        """Vehicle reference-point trajectory, lever arm removed"""
        rows = self.of_kind(RecordKind.GT)
        if not rows:
            return None
        data = np.array([r.payload for r in rows])
        heading = data[:, 4]
        pos = data[:, :2] - lever_arm_offset(heading, params.d_gnss)
        return Trajectory(t=np.array([r.t for r in rows]), pos=pos, vel=data[:, 2:4], heading=heading)

    def estimates(self, source: str = "FUSION") -> Optional[EstimateSeries]:
        rows = self.of_kind(RecordKind.EST)
        if not rows:
            return None
        return EstimateSeries(
            source=source,
            t=np.array([r.t for r in rows]),
            pos=np.array([r.payload[:2] for r in rows]),
        )


def _chronological(records: Iterable[LogRecord]) -> List[LogRecord]:
    return sorted(records, key=lambda r: r.t)


def records_from_scenario(traj: Trajectory, streams: SensorStreams, params: NoiseParams) -> List[LogRecord]:
    """GT, GPS, IMU and IX rows merged in time order (GT before GPS before IMU before IX on ties)"""
    device = traj.pos + lever_arm_offset(traj.heading, params.d_gnss)
    records = [
        LogRecord(kind=RecordKind.GT, t=float(t), payload=(float(p[0]), float(p[1]), float(v[0]), float(v[1]), float(h)))
        for t, p, v, h in zip(traj.t, device, traj.vel, traj.heading)
    ]
    records += [
        LogRecord(kind=RecordKind.GPS, t=g.t, payload=(g.pos.x, g.pos.y) if g.pos is not None else ())
        for g in streams.gps
    ]
    records += [LogRecord(kind=RecordKind.IMU, t=v.t, payload=(v.vx, v.vy)) for v in streams.imu]
    for frame in streams.ix:
        if not frame.candidates:
            records.append(LogRecord(kind=RecordKind.IX, t=frame.t))
        records += [LogRecord(kind=RecordKind.IX, t=frame.t, payload=(c.x, c.y)) for c in frame.candidates]
    return _chronological(records)


def estimate_records(results: Iterable[FusionEpochResult]) -> List[LogRecord]:
    records = []
    for result in results:
        state = result.final
        cov = state.cov
        records.append(LogRecord(
            kind=RecordKind.EST,
            t=state.t,
            payload=(state.pos.x, state.pos.y, float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1])),
        ))
    return records


def merge_estimates(log: LogData, results: Iterable[FusionEpochResult]) -> List[LogRecord]:
    """Input records with EST rows appended at their epochs; earlier EST rows are replaced"""
    base = [r for r in log.records if r.kind != RecordKind.EST]
    return _chronological(base + estimate_records(results))


def metadata_path(log_path: PathLike) -> Path:
    return Path(f"{log_path}.meta.json")


def write_metadata(log_path: PathLike, meta: Dict) -> Path:
    """`<log>.meta.json` sidecar next to the log"""
    path = metadata_path(log_path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def diagnostics_frame(results: Sequence[FusionEpochResult]) -> pd.DataFrame:
    """Per-epoch innovations, innovation covariances and gains; NaN where an update was skipped"""
    nan2, nan22 = [np.nan] * 2, np.full((2, 2), np.nan)
    rows = []
    for r in results:
        row = {
            "t": r.final.t,
            "pred_x": r.predicted.pos.x,
            "pred_y": r.predicted.pos.y,
            "pred_trace": float(np.trace(r.predicted.cov)),
            "gps_used": int(r.gps_innovation is not None),
            "ix_used": int(r.ix_innovation is not None),
        }
        for prefix, nu, S, K in (("gps", r.gps_innovation, r.gps_innovation_cov, r.gps_gain),
                                 ("ix", r.ix_innovation, r.ix_innovation_cov, r.ix_gain)):
            nu = nan2 if nu is None else nu
            S = nan22 if S is None else S
            K = nan22 if K is None else K
            row.update({
                f"{prefix}_nu_x": nu[0], f"{prefix}_nu_y": nu[1],
                f"{prefix}_S_xx": S[0, 0], f"{prefix}_S_xy": S[0, 1], f"{prefix}_S_yy": S[1, 1],
                f"{prefix}_K_xx": K[0, 0], f"{prefix}_K_xy": K[0, 1],
                f"{prefix}_K_yx": K[1, 0], f"{prefix}_K_yy": K[1, 1],
            })
        row.update({
            "x": r.final.pos.x, "y": r.final.pos.y,
            "cov_xx": r.final.cov[0, 0], "cov_xy": r.final.cov[0, 1], "cov_yy": r.final.cov[1, 1],
            "trace": float(np.trace(r.final.cov)),
        })
        rows.append(row)
    return pd.DataFrame(rows)


def write_diagnostics(results: Sequence[FusionEpochResult], path: PathLike) -> Path:
    path = Path(path)
    diagnostics_frame(results).to_csv(path, index=False, lineterminator="\n", float_format="%.17g", na_rep="")
    logger.info(f"wrote diagnostics for {len(results)} epochs to {path}")
    return path
