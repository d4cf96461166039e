"""
Position error analysis: per-epoch errors against ground truth, summaries,
histograms and multi-source comparison tables.

Standard deviations use the sample (n-1) convention. Summaries reduce the
absolute values of the signed longitudinal / lateral components.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.exceptions import InvalidInputError
from src.models import (
    CaseStats,
    CaseWindow,
    ComparisonReport,
    ErrorComponent,
    ErrorSeries,
    EstimateSeries,
    HistogramBins,
    NoiseParams,
    RawEpoch,
    SensorStreams,
    SummaryStats,
    Trajectory,
)
from src.services.scenario_simulator import sample_truth
from src.utils.geo import node_distances
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

GPS = "GPS"
IX = "IX"
FUSION = "FUSION"
GPS_IMU = "GPS_IMU"


def _time_keys(t: np.ndarray) -> np.ndarray:
    """Timestamps as integer microseconds, for exact set operations"""
    return np.round(np.asarray(t, dtype=float) * 1e6).astype(np.int64)


def position_errors(estimates: EstimateSeries, truth: Trajectory, heading_aware: bool = True) -> ErrorSeries:
    """Signed errors of the estimates against truth interpolated to their timestamps.

    Heading-aware splits the error along / across the truth heading, otherwise
    into map x / y. Estimates outside the truth span are dropped and counted.
    """
    inside = (estimates.t >= truth.t[0] - 1e-9) & (estimates.t <= truth.t[-1] + 1e-9)
    dropped = int((~inside).sum())
    if dropped:
        logger.warning(f"{estimates.source}: {dropped} estimates outside the ground-truth span dropped")

    t = estimates.t[inside]
    true_pos, _, heading = sample_truth(truth, t)
    err = estimates.pos[inside] - true_pos

    if heading_aware:
        c, s = np.cos(heading), np.sin(heading)
        longitudinal = err[:, 0] * c + err[:, 1] * s
        lateral = -err[:, 0] * s + err[:, 1] * c
    else:
        longitudinal, lateral = err[:, 0], err[:, 1]

    return ErrorSeries(
        t=t,
        longitudinal=longitudinal,
        lateral=lateral,
        total=np.hypot(longitudinal, lateral),
        heading_aware=heading_aware,
        dropped=dropped,
    )


def summarize_values(values: np.ndarray) -> SummaryStats:
    values = np.abs(np.asarray(values, dtype=float))
    n = values.size
    if n == 0:
        raise InvalidInputError("cannot summarize an empty error series")
    return SummaryStats(
        mean=float(np.mean(values)),
        std=float(np.std(values, ddof=1)) if n > 1 else 0.0,
        rmse=float(np.sqrt(np.mean(values * values))),
        max=float(np.max(values)),
        n=n,
    )


def summarize(series: ErrorSeries, component: ErrorComponent = ErrorComponent.TOTAL) -> SummaryStats:
    """Mean, sample std, RMSE and max of one error component"""
    return summarize_values(series.component(component))


def histogram(series: ErrorSeries, bin_width: float,
              component: ErrorComponent = ErrorComponent.TOTAL) -> HistogramBins:
    """Counts of |error| in lower-closed bins [k*w, (k+1)*w) starting at 0"""
    if bin_width <= 0:
        raise InvalidInputError(f"bin width must be positive, got {bin_width}")
    values = np.abs(series.component(component))
    if values.size == 0:
        return HistogramBins(bin_width=bin_width)
    counts = np.bincount(np.floor(values / bin_width).astype(np.int64))
    return HistogramBins(bin_width=bin_width, counts=counts.tolist())


def windowed_rms(series: ErrorSeries, window: float,
                 component: ErrorComponent = ErrorComponent.TOTAL) -> np.ndarray:
    """RMS over the trailing window (t - window, t] at every sample"""
    if window <= 0:
        raise InvalidInputError(f"RMS window must be positive, got {window}")
    if len(series) == 0:
        return np.array([])
    values = series.component(component)
    squared = pd.Series(values * values, index=pd.to_timedelta(series.t, unit="s"))
    return np.sqrt(squared.rolling(pd.Timedelta(seconds=window)).mean().to_numpy())


def detection_windows(truth: Trajectory, params: NoiseParams) -> List[CaseWindow]:
    """Contiguous intervals in which the vehicle is within detection range of the node"""
    near = node_distances(truth.pos, params.node) <= params.detection_range
    edges = np.diff(near.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [
        CaseWindow(name=f"case{k + 1}", start=float(truth.t[a]), end=float(truth.t[b]))
        for k, (a, b) in enumerate(zip(starts, ends))
    ]


def gps_estimates(streams: SensorStreams) -> EstimateSeries:
    fixes = [g for g in streams.gps if g.pos is not None]
    return EstimateSeries(
        source=GPS,
        t=np.array([g.t for g in fixes], dtype=float),
        pos=np.array([[g.pos.x, g.pos.y] for g in fixes], dtype=float).reshape(-1, 2),
    )


def ix_only_estimates(epochs: Sequence[RawEpoch], fused: EstimateSeries, params: NoiseParams) -> EstimateSeries:
    """The candidate nearest to the fused estimate (within d_thresh) at every epoch that has one"""
    fused_at = dict(zip(_time_keys(fused.t).tolist(), fused.pos))
    t, pos = [], []
    for epoch in epochs:
        ref = fused_at.get(int(_time_keys([epoch.t])[0]))
        if ref is None or not epoch.candidates.candidates:
            continue
        cands = np.array([[c.x, c.y] for c in epoch.candidates.candidates])
        dist = np.hypot(cands[:, 0] - ref[0], cands[:, 1] - ref[1])
        in_range = node_distances(cands, params.node) <= params.detection_range
        dist = np.where(in_range, dist, np.inf)
        best = int(np.argmin(dist))
        if dist[best] <= params.d_thresh:
            t.append(epoch.t)
            pos.append(cands[best])
    return EstimateSeries(source=IX, t=np.array(t, dtype=float), pos=np.array(pos, dtype=float).reshape(-1, 2))


def _restrict(series: EstimateSeries, keys: np.ndarray) -> EstimateSeries:
    own = _time_keys(series.t)
    mask = np.isin(own, keys)
    _, first = np.unique(own[mask], return_index=True)
    t, pos = series.t[mask][first], series.pos[mask][first]
    return EstimateSeries(source=series.source, t=t, pos=pos)


def compare_report(
    gps_est: EstimateSeries,
    ix_est: EstimateSeries,
    fusion_est: EstimateSeries,
    truth: Trajectory,
    case_windows: Sequence[CaseWindow],
    extra: Sequence[EstimateSeries] = (),
    component: ErrorComponent = ErrorComponent.TOTAL,
    heading_aware: bool = True,
) -> ComparisonReport:
    """Per-case and averaged error stats, all sources over the same epochs.

    The average row is the unweighted mean of the per-case means (and stds)
    over non-empty cases; `overall` pools every in-window epoch.
    """
    sources = [gps_est, ix_est, fusion_est, *extra]
    names = [s.source for s in sources]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"duplicate source names {names}")

    span = (truth.t[0] - 1e-9, truth.t[-1] + 1e-9)
    common: Optional[np.ndarray] = None
    for series in sources:
        keys = _time_keys(series.t[(series.t >= span[0]) & (series.t <= span[1])])
        common = keys if common is None else np.intersect1d(common, keys)
    restricted = [_restrict(s, common) for s in sources]
    errors = {s.source: position_errors(s, truth, heading_aware) for s in restricted}

    reference = _time_keys(errors[names[0]].t)
    for name in names[1:]:
        if not np.array_equal(_time_keys(errors[name].t), reference):
            raise AssertionError(f"source {name} evaluated over a different epoch set")

    t = errors[names[0]].t
    rows: List[CaseStats] = []
    pooled = np.zeros(t.shape, dtype=bool)
    for case in case_windows:
        mask = (t >= case.start - 1e-9) & (t <= case.end + 1e-9)
        pooled |= mask
        n = int(mask.sum())
        if n == 0:
            logger.warning(f"case {case.name} [{case.start:.3f}, {case.end:.3f}] has no common epochs")
        for name in names:
            stats = summarize_values(errors[name].component(component)[mask]) if n else None
            rows.append(CaseStats(case=case.name, source=name, n_epochs=n, stats=stats))

    average_mean: Dict[str, Optional[float]] = {}
    average_std: Dict[str, Optional[float]] = {}
    overall: Dict[str, Optional[SummaryStats]] = {}
    for name in names:
        filled = [r.stats for r in rows if r.source == name and r.stats is not None]
        average_mean[name] = float(np.mean([s.mean for s in filled])) if filled else None
        average_std[name] = float(np.mean([s.std for s in filled])) if filled else None
        overall[name] = summarize_values(errors[name].component(component)[pooled]) if pooled.any() else None

    logger.info(f"comparison over {int(pooled.sum())} common epochs in {len(case_windows)} cases: "
                + ", ".join(f"{n}={average_mean[n]:.3f}" for n in names if average_mean[n] is not None))
    return ComparisonReport(
        sources=names,
        cases=list(case_windows),
        rows=rows,
        average_mean=average_mean,
        average_std=average_std,
        overall=overall,
    )


def trajectory_error_table(series: ErrorSeries) -> pd.DataFrame:
    """Longitudinal / lateral / total stats of one source over its whole series"""
    rows = []
    for component in ErrorComponent:
        stats = summarize(series, component)
        rows.append({"component": component.value, **stats.model_dump()})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def report_frame(report: ComparisonReport) -> pd.DataFrame:
    """Report rows: one per (case, source), then Average and Overall rows"""
    def _row(case, source, n, mean, std, rmse=None, maximum=None):
        return {"case": case, "source": source, "n_epochs": n,
                "mean": mean, "std": std, "rmse": rmse, "max": maximum}

    rows = []
    for r in report.rows:
        s = r.stats
        rows.append(_row(r.case, r.source, r.n_epochs,
                         s.mean if s else None, s.std if s else None,
                         s.rmse if s else None, s.max if s else None))
    for name in report.sources:
        n_cases = sum(1 for r in report.rows if r.source == name and r.stats is not None)
        rows.append(_row("Average", name, n_cases, report.average_mean[name], report.average_std[name]))
    for name in report.sources:
        s = report.overall[name]
        rows.append(_row("Overall", name, s.n if s else 0,
                         s.mean if s else None, s.std if s else None,
                         s.rmse if s else None, s.max if s else None))
    return pd.DataFrame(rows, columns=["case", "source", "n_epochs", "mean", "std", "rmse", "max"])


def write_report_csv(report: ComparisonReport, path: PathLike) -> Path:
    path = Path(path)
    report_frame(report).to_csv(path, index=False, lineterminator="\n", float_format="%.17g", na_rep="")
    return path


def format_report_table(report: ComparisonReport) -> str:
    """Aligned plain-text table: mean / std per case and source"""
    cells: Dict[str, Dict[str, Optional[float]]] = {}
    for r in report.rows:
        line = cells.setdefault(r.case, {})
        line[f"{r.source} mean"] = r.stats.mean if r.stats else None
        line[f"{r.source} std"] = r.stats.std if r.stats else None
    average = cells.setdefault("Average", {})
    for name in report.sources:
        average[f"{name} mean"] = report.average_mean[name]
        average[f"{name} std"] = report.average_std[name]

    columns = [f"{name} {stat}" for name in report.sources for stat in ("mean", "std")]
    table = pd.DataFrame.from_dict(cells, orient="index", columns=columns).astype(float)
    return table.to_string(float_format=lambda v: f"{v:.3f}", na_rep="-")


def histogram_frame(hists: Dict[str, HistogramBins]) -> pd.DataFrame:
    rows = []
    for source, h in hists.items():
        for k, count in enumerate(h.counts):
            start = h.range_start + k * h.bin_width
            rows.append({"source": source, "bin_start": start, "bin_end": start + h.bin_width, "count": count})
    return pd.DataFrame(rows, columns=["source", "bin_start", "bin_end", "count"])


def write_histogram_csv(hists: Dict[str, HistogramBins], path: PathLike) -> Path:
    path = Path(path)
    histogram_frame(hists).to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path


def error_trace_frame(errors: Dict[str, ErrorSeries], window: float) -> pd.DataFrame:
    """Instantaneous errors and trailing-window RMS of the total error per source"""
    frames = []
    for source, series in errors.items():
        frames.append(pd.DataFrame({
            "source": source,
            "t": series.t,
            "long": series.longitudinal,
            "lat": series.lateral,
            "total": series.total,
            "rms": windowed_rms(series, window),
        }))
    if not frames:
        return pd.DataFrame(columns=["source", "t", "long", "lat", "total", "rms"])
    return pd.concat(frames, ignore_index=True)
