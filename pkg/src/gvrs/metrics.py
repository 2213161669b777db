"""Calibration metrics for per-pixel grip distributions.

Every metric is computed per sample (one image with sparse ground truth)
using pixel weights that grow linearly from the horizon to the bottom row and
average to one, then averaged over the test set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .mixture import GripSummaryRaster, SurfaceState

WEIGHT_FLOOR = 1e-3
EVAL_LOW = 0.1
EVAL_LOW_MAX = 0.81
EVAL_HIGH = 0.82
VIOLATION_PERCENTILES = (50, 70, 90)

REPORT_COLUMNS = ("method", "rmse_mean", "rmse_median", "F_sigma", "F_90", "F_over_P5",
                  "mean_interval_len", "mean_P5", "viol_p50", "viol_p70", "viol_p90")


@dataclass(eq=False)
class GroundTruthSample:
    sample_id: str
    rows: np.ndarray
    cols: np.ndarray
    grips: np.ndarray
    states: np.ndarray
    height: int
    horizon: int

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.grips = np.asarray(self.grips, dtype=float)
        self.states = np.asarray(self.states, dtype=np.int64)
        n = self.rows.size
        if n < 1:
            raise InvalidInputError("a sample needs at least one ground-truth pixel")
        if any(a.shape != (n,) for a in (self.cols, self.grips, self.states)):
            raise InvalidInputError("ground-truth columns must have equal length")
        if not 0 <= self.horizon < self.height:
            raise InvalidInputError("horizon row must lie inside the image")
        if np.any((self.rows < 0) | (self.rows >= self.height)) or np.any(self.cols < 0):
            raise InvalidInputError("ground-truth pixel outside the image")
        if not np.all(np.isfinite(self.grips)):
            raise InvalidInputError("grip values must be finite")
        if np.any((self.states < 0) | (self.states >= len(SurfaceState))):
            raise InvalidInputError("unknown surface state code")

    def __len__(self):
        return self.rows.size


@dataclass
class SampleMetrics:
    sample_id: str
    n_pixels: int
    mse_mean: float
    mse_median: Optional[float]
    f_sigma: Optional[float]
    f_90: float
    f_over_p5: float
    interval_len: float
    mean_p5: float
    violations: np.ndarray
    gt_mean: float
    p05_mean: float


@dataclass
class MetricReport:
    method: str
    rmse_mean: float
    rmse_median: Optional[float]
    F_sigma: Optional[float]
    F_90: float
    F_over_P5: float
    mean_interval_len: float
    mean_P5: float
    viol_p50: Optional[float]
    viol_p70: Optional[float]
    viol_p90: Optional[float]

    def row(self) -> list:
        return [getattr(self, c) for c in REPORT_COLUMNS]


def pixel_weights(sample: GroundTruthSample) -> np.ndarray:
    """Linear ramp from the horizon (floor 1e-3) to the bottom row, mean one."""
    bottom = sample.height - 1
    if not np.any(sample.rows > sample.horizon):
        raise InvalidInputError("all ground-truth pixels lie at or above the horizon")
    raw = np.maximum((sample.rows - sample.horizon) / (bottom - sample.horizon), WEIGHT_FLOOR)
    return raw / raw.mean()


def clamp_interval_for_eval(low, high):
    """Evaluation clamp: low into [0.1, 0.81]; high above 0.81 becomes 0.82."""
    lo = np.clip(np.asarray(low, dtype=float), EVAL_LOW, EVAL_LOW_MAX)
    hi = np.asarray(high, dtype=float)
    hi = np.where(hi > EVAL_LOW_MAX, EVAL_HIGH, np.clip(hi, EVAL_LOW, EVAL_LOW_MAX))
    hi = np.maximum(hi, lo)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def _wfrac(ind, w, weighted):
    return float(np.mean(w * ind)) if weighted else float(np.mean(ind))


def sample_metrics(summary: GripSummaryRaster, sample: GroundTruthSample,
                   clamp: bool = True, weighted_coverage: bool = True) -> SampleMetrics:
    """Per-sample errors, coverages and lower-bound violations.

    Intervals are closed; exceedance of the 5th percentile is strict.
    """
    shape = summary.shape
    if len(shape) != 2 or np.any(sample.rows >= shape[0]) or np.any(sample.cols >= shape[1]):
        raise InvalidInputError(f"summary does not cover sample {sample.sample_id!r}")
    s = summary.at(sample.rows, sample.cols)
    for name in ("mean", "p05", "p95"):
        if np.any(np.isnan(getattr(s, name))):
            raise InvalidInputError(f"summary lacks {name} at a ground-truth pixel")
    g = sample.grips
    w = pixel_weights(sample)

    lo, hi = s.p05, s.p95
    if clamp:
        lo, hi = clamp_interval_for_eval(lo, hi)
    in90 = (g >= lo) & (g <= hi)
    over = g > lo

    mse_median = f_sigma = None
    if s.median is not None:
        mse_median = float(np.mean(w * (g - s.median) ** 2))
    if s.sigma_low is not None and s.sigma_high is not None:
        slo, shi = s.sigma_low, s.sigma_high
        if clamp:
            slo, shi = clamp_interval_for_eval(slo, shi)
        f_sigma = _wfrac((g >= slo) & (g <= shi), w, weighted_coverage)

    return SampleMetrics(
        sample_id=sample.sample_id,
        n_pixels=len(sample),
        mse_mean=float(np.mean(w * (g - s.mean) ** 2)),
        mse_median=mse_median,
        f_sigma=f_sigma,
        f_90=_wfrac(in90, w, weighted_coverage),
        f_over_p5=_wfrac(over, w, weighted_coverage),
        interval_len=float(np.mean(w * (hi - lo))),
        mean_p5=float(np.mean(w * lo)),
        violations=(lo - g)[g < lo],
        gt_mean=float(np.mean(g)),
        p05_mean=float(np.mean(lo)),
    )


def _mean(values) -> float:
    return math.fsum(values) / len(values)


def _optional_mean(records, attr):
    vals = [getattr(r, attr) for r in records]
    if any(v is None for v in vals):
        return None
    return _mean(vals)


def aggregate(records: Sequence[SampleMetrics], method: str = "",
              violation_mode: str = "per_sample") -> MetricReport:
    """Average per-sample metrics into one report row.

    ``violation_mode`` is "per_sample" (percentiles per sample, averaged over
    samples with at least one violation) or "pooled" (percentiles over all
    violating pixels of all samples).
    """
    if not records:
        raise InvalidInputError("need at least one sample")
    if violation_mode not in ("per_sample", "pooled"):
        raise InvalidInputError(f"unknown violation mode {violation_mode!r}")
    recs = sorted(records, key=lambda r: r.sample_id)

    rmse_median = _optional_mean(recs, "mse_median")
    f_sigma = _optional_mean(recs, "f_sigma")

    viol = [None, None, None]
    if violation_mode == "pooled":
        allv = np.concatenate([r.violations for r in recs])
        if allv.size:
            viol = [float(v) for v in np.percentile(allv, VIOLATION_PERCENTILES)]
    else:
        per = [np.percentile(r.violations, VIOLATION_PERCENTILES)
               for r in recs if r.violations.size]
        if per:
            viol = [_mean([p[i] for p in per]) for i in range(len(VIOLATION_PERCENTILES))]

    return MetricReport(
        method=method,
        rmse_mean=math.sqrt(_mean([r.mse_mean for r in recs])),
        rmse_median=None if rmse_median is None else math.sqrt(rmse_median),
        F_sigma=None if f_sigma is None else 100.0 * f_sigma,
        F_90=100.0 * _mean([r.f_90 for r in recs]),
        F_over_P5=100.0 * _mean([r.f_over_p5 for r in recs]),
        mean_interval_len=_mean([r.interval_len for r in recs]),
        mean_P5=_mean([r.mean_p5 for r in recs]),
        viol_p50=viol[0], viol_p70=viol[1], viol_p90=viol[2],
    )


def format_table(reports: Sequence[MetricReport]) -> str:
    """Aligned text table, one column per method (absent values as '-')."""
    labels = [f.name for f in fields(MetricReport) if f.name != "method"]
    head = ["metric"] + [r.method for r in reports]
    rows = []
    for name in labels:
        cells = [name]
        for r in reports:
            v = getattr(r, name)
            cells.append("-" if v is None else f"{v:.4f}")
        rows.append(cells)
    widths = [max(len(str(row[i])) for row in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(str(c).rjust(wd) if i else str(c).ljust(wd)
                       for i, (c, wd) in enumerate(zip(row, widths)))
             for row in [head] + rows]
    return "\n".join(lines)
