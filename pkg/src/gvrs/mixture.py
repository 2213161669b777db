"""Fusion of per-pixel class probabilities with per-class grip densities.

The grip density of a pixel is sum_c p_c * q_c(g).  Every class density is
linear between the union of all class knots, so the mixture is represented
exactly on that grid.  Class pdf and CDF values are tabulated once on the
grid; per pixel the work is a K-term weighted sum at the O(log U) knots the
bracketing search touches, plus one quadratic solve per quantile.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from . import pl_density as pld
from .errors import InvalidInputError

PROB_SUM_TOL = 1e-6
KNOT_DEDUP_TOL = 1e-12
SIGMA_LEVELS = (0.158655, 0.841345)
PERCENTILES = (0.05, 0.95)
SUMMARY_CHANNELS = ("mean", "median", "p05", "p95", "sigma_low", "sigma_high")


class SurfaceState(enum.IntEnum):
    DRY = 0
    WET = 1
    SNOWY = 2
    ICY = 3
    SLUSHY = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "SurfaceState":
        if isinstance(value, SurfaceState):
            return value
        if isinstance(value, str):
            v = value.strip()
            if v.isdigit():
                return cls(int(v))
            try:
                return cls[v.upper()]
            except KeyError:
                raise InvalidInputError(f"unknown surface state {value!r}") from None
        try:
            return cls(int(value))
        except ValueError:
            raise InvalidInputError(f"unknown surface state {value!r}") from None


K = len(SurfaceState)


@dataclass(eq=False)
class GripSummaryRaster:
    """Per-pixel grip distribution summary.

    ``median`` and the sigma bounds are None for methods that do not define
    them (quantile regression).  ``crossed`` flags pixels whose raw quantile
    outputs were in the wrong order.
    """

    mean: np.ndarray
    median: Optional[np.ndarray]
    p05: np.ndarray
    p95: np.ndarray
    sigma_low: Optional[np.ndarray]
    sigma_high: Optional[np.ndarray]
    method: str = ""
    crossed: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.mean.shape

    def to_channels(self, dtype=np.float32) -> np.ndarray:
        """Stack into (H, W, 6); absent fields become NaN."""
        planes = []
        for name in SUMMARY_CHANNELS:
            a = getattr(self, name)
            planes.append(np.full(self.shape, np.nan) if a is None else a)
        return np.stack(planes, axis=-1).astype(dtype)

    @classmethod
    def from_channels(cls, arr, method: str = "") -> "GripSummaryRaster":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 3 or arr.shape[-1] != len(SUMMARY_CHANNELS):
            raise InvalidInputError("summary raster needs 6 channels")
        fields = {}
        for i, name in enumerate(SUMMARY_CHANNELS):
            plane = arr[..., i]
            fields[name] = None if np.all(np.isnan(plane)) else plane
        return cls(method=method, **fields)

    def at(self, rows, cols) -> "GripSummaryRaster":
        """Values at the given pixel coordinates (1-D arrays)."""
        def pick(a):
            return None if a is None else a[rows, cols]
        return GripSummaryRaster(
            mean=pick(self.mean), median=pick(self.median), p05=pick(self.p05),
            p95=pick(self.p95), sigma_low=pick(self.sigma_low),
            sigma_high=pick(self.sigma_high), method=self.method,
            crossed=pick(self.crossed))


@dataclass(frozen=True, eq=False)
class MixtureTable:
    """Class densities tabulated on the union knot grid.

    ``knots`` is the union grid with every interior point where some class
    density jumps listed twice (left limit, then right limit); ``union_knots``
    is the plain deduplicated union.
    """

    union_knots: np.ndarray
    knots: np.ndarray
    pdf: np.ndarray   # (K, V)
    cdf: np.ndarray   # (K, V)
    means: np.ndarray  # (K,)
    densities: tuple
    pdf_km: np.ndarray = None  # knot-major (V, K) copies for the kernels
    cdf_km: np.ndarray = None

    def __post_init__(self):
        for name in ("pdf", "cdf"):
            km = np.ascontiguousarray(getattr(self, name).T)
            km.setflags(write=False)
            object.__setattr__(self, name + "_km", km)

    @property
    def n_classes(self) -> int:
        return self.pdf.shape[0]


def union_knots(knot_arrays: Sequence[np.ndarray], tol: float = KNOT_DEDUP_TOL) -> np.ndarray:
    allk = np.sort(np.concatenate([np.asarray(k, dtype=float) for k in knot_arrays]))
    keep = np.ones(allk.size, dtype=bool)
    last = allk[0]
    for i in range(1, allk.size):
        if allk[i] - last <= tol:
            keep[i] = False
        else:
            last = allk[i]
    return allk[keep]


def _order_densities(densities) -> list:
    if isinstance(densities, Mapping):
        items = list(densities.items())
        keyed = [(SurfaceState.parse(k), d) for k, d in items]
    else:
        keyed = [(SurfaceState.parse(d.name), d) for d in densities]
    seen = {}
    for state, d in keyed:
        if state in seen:
            raise InvalidInputError(f"duplicate density for class {state.label}")
        seen[state] = d
    missing = [s.label for s in SurfaceState if s not in seen]
    if missing:
        raise InvalidInputError(f"missing densities for classes: {', '.join(missing)}")
    return [seen[s] for s in SurfaceState]


def build_mixture_table(densities) -> MixtureTable:
    """Tabulate one density per surface state on their union knot grid.

    ``densities`` is a sequence of densities named after the states or a
    mapping state -> density.
    """
    dens = _order_densities(densities)
    for d in dens:
        if d.has_jumps():
            raise InvalidInputError(f"class density {d.name!r} must have strictly increasing knots")
    tol = KNOT_DEDUP_TOL
    u = union_knots([d.knots for d in dens], tol)

    # per class: one-sided limits (left, right) and the plain value at each union knot
    left, right, plain = [], [], []
    for d in dens:
        a, b = d.support
        v = np.asarray(pld.pdf(d, np.clip(u, a, b)))
        left.append(np.where((u > a + tol) & (u <= b + tol), v, 0.0))
        right.append(np.where((u >= a - tol) & (u < b - tol), v, 0.0))
        plain.append(np.where((u >= a - tol) & (u <= b + tol), v, 0.0))
    left, right, plain = np.array(left), np.array(right), np.array(plain)

    jump = np.any(left != right, axis=0)
    jump[0] = jump[-1] = False
    reps = np.where(jump, 2, 1)
    knots = np.repeat(u, reps)
    # jump knots carry (left, right); the others their plain value
    first = np.where(jump, left, plain)
    pdf_t = np.repeat(first, reps, axis=1)
    pos = np.cumsum(reps) - 1
    pdf_t[:, pos[jump]] = right[:, jump]
    pdf_t = np.ascontiguousarray(pdf_t)
    cdf_t = np.ascontiguousarray(np.vstack([pld.cdf(d, knots) for d in dens]))
    means = np.array([d.mean for d in dens])
    for arr in (u, knots, pdf_t, cdf_t, means):
        arr.setflags(write=False)
    return MixtureTable(u, knots, pdf_t, cdf_t, means, tuple(dens))


def _check_probs(probs, k) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape[-1] != k:
        raise InvalidInputError(f"expected {k} class probabilities, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("class probabilities must be finite")
    if np.any(p < 0):
        raise InvalidInputError("class probabilities must be non-negative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_SUM_TOL):
        raise InvalidInputError("class probabilities must sum to 1")
    return p


def fuse(table: MixtureTable, probs) -> pld.PiecewiseLinearDensity:
    """Grip density of a single pixel with class probabilities ``probs``."""
    p = _check_probs(probs, table.n_classes)
    if p.ndim != 1:
        raise InvalidInputError("fuse takes a single probability vector")
    w = _kernels.normalized_weights(np.ascontiguousarray(p))
    dens, cum = _kernels.mix_rows(w, table.pdf_km, table.cdf_km)
    mean = _kernels.mix_mean(w, table.means)
    return pld.PiecewiseLinearDensity("mixture", table.knots, dens, cum=cum, mean=mean)


def fuse_raster(table: MixtureTable, raster, percentiles=PERCENTILES,
                sigma_levels=SIGMA_LEVELS, workers: int = 1) -> GripSummaryRaster:
    """Summaries of every pixel of an (H, W, K) probability raster.

    Rows are split into ``workers`` contiguous blocks processed on threads;
    each pixel's result is independent of the split.
    """
    arr = np.asarray(raster)
    if arr.ndim != 3:
        raise InvalidInputError("probability raster must be (H, W, K)")
    h, w, _ = arr.shape
    probs = np.ascontiguousarray(_check_probs(arr, table.n_classes).reshape(h * w, -1))
    levels = np.array([0.5, percentiles[0], percentiles[1], sigma_levels[0], sigma_levels[1]])
    if np.any((levels < 0) | (levels > 1)):
        raise InvalidInputError("quantile levels must lie in [0, 1]")
    out = np.empty((h * w, 1 + levels.size))
    args = (table.knots, table.pdf_km, table.cdf_km, table.means, levels)
    n = h * w
    workers = max(1, int(workers))
    if workers == 1 or n < 2 * workers:
        _kernels.fuse_block(probs, *args, out)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_kernels.fuse_block, probs[a:b], *args, out[a:b])
                       for a, b in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    out = out.reshape(h, w, -1)
    return GripSummaryRaster(mean=out[..., 0], median=out[..., 1], p05=out[..., 2],
                             p95=out[..., 3], sigma_low=out[..., 4], sigma_high=out[..., 5],
                             method="gvrs")


def one_hot(labels, k: int = K) -> np.ndarray:
    lab = np.asarray(labels)
    if not np.issubdtype(lab.dtype, np.integer):
        if not np.all(np.isfinite(lab)) or np.any(lab != np.round(lab)):
            raise InvalidInputError("labels must be integer codes")
        lab = lab.astype(np.int64)
    if np.any((lab < 0) | (lab >= k)):
        raise InvalidInputError(f"label codes must lie in 0..{k - 1}")
    return np.eye(k)[lab]


def ideal_from_labels(table: MixtureTable, labels, workers: int = 1) -> GripSummaryRaster:
    """Summaries for a classifier that always predicts the true state."""
    s = fuse_raster(table, one_hot(labels, table.n_classes), workers=workers)
    s.method = "ideal_gvrs"
    return s


def density_summary(d: pld.PiecewiseLinearDensity, percentiles=PERCENTILES,
                    sigma_levels=SIGMA_LEVELS) -> dict:
    """Same six numbers as one pixel of ``fuse_raster`` for a single density."""
    q = pld.quantile(d, np.array([0.5, percentiles[0], percentiles[1],
                                  sigma_levels[0], sigma_levels[1]]))
    return dict(zip(SUMMARY_CHANNELS, (d.mean, *map(float, q))))
