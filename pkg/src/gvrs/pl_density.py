"""Piecewise-linear probability densities on the grip axis.

A density is given by knots and the pdf value at each knot; between knots the
pdf is linear and outside the support it is zero, so the CDF is piecewise
quadratic and can be integrated and inverted exactly.

Mixtures of densities with different supports have jumps.  A jump is stored
as a repeated knot (zero-width segment) whose two entries hold the left and
right limits.  ``build`` only accepts strictly increasing knots; repeated
knots are produced internally by :mod:`gvrs.mixture`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericalFailure
from .nelder_mead import SimplexOptions, minimize

NORMALIZATION_TOL = 1e-6


def _segments(knots, dens):
    h = np.diff(knots)
    dy = np.diff(dens)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(h > 0, dy / np.where(h > 0, h, 1.0), 0.0)
    return h, m


def trapezoid_mass(knots, dens) -> float:
    knots = np.asarray(knots, dtype=float)
    dens = np.asarray(dens, dtype=float)
    return float(np.sum(0.5 * (dens[:-1] + dens[1:]) * np.diff(knots)))


def _cumulative(knots, dens):
    cum = np.empty(knots.size)
    cum[0] = 0.0
    np.cumsum(0.5 * (dens[:-1] + dens[1:]) * np.diff(knots), out=cum[1:])
    return cum


def _analytic_mean(knots, dens) -> float:
    x0, y0 = knots[:-1], dens[:-1]
    h, m = _segments(knots, dens)
    seg = x0 * (y0 * h + 0.5 * m * h**2) + 0.5 * y0 * h**2 + m * h**3 / 3.0
    return float(np.sum(seg))


def _analytic_variance(knots, dens, mean) -> float:
    # second moment about the mean, exact per segment
    a = knots[:-1] - mean
    y0 = dens[:-1]
    h, m = _segments(knots, dens)
    m0 = y0 * h + 0.5 * m * h**2
    m1 = 0.5 * y0 * h**2 + m * h**3 / 3.0
    m2 = y0 * h**3 / 3.0 + 0.25 * m * h**4
    return float(np.sum(a * a * m0 + 2.0 * a * m1 + m2))


@dataclass(frozen=True, eq=False)
class PiecewiseLinearDensity:
    name: str
    knots: np.ndarray
    densities: np.ndarray
    cum: np.ndarray = field(default=None, repr=False)
    mean: float = field(default=None, repr=False)

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float)
        dens = np.array(self.densities, dtype=float)
        if knots.ndim != 1 or knots.shape != dens.shape or knots.size < 2:
            raise InvalidInputError("knots and densities must be 1-D of equal length >= 2")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(dens))):
            raise InvalidInputError("knots and densities must be finite")
        dk = np.diff(knots)
        if np.any(dk < 0) or not knots[-1] > knots[0]:
            raise InvalidInputError("knots must be non-decreasing with positive span")
        if dk.size > 1 and np.any((dk[:-1] == 0) & (dk[1:] == 0)):
            raise InvalidInputError("a knot may repeat at most once")
        if np.any(dens < 0):
            raise InvalidInputError("densities must be non-negative")
        cum = _cumulative(knots, dens) if self.cum is None else np.array(self.cum, dtype=float)
        if cum.shape != knots.shape:
            raise InvalidInputError("cumulative table has the wrong length")
        mean = _analytic_mean(knots, dens) if self.mean is None else float(self.mean)
        for arr in (knots, dens, cum):
            arr.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "cum", cum)
        object.__setattr__(self, "mean", mean)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def n_intervals(self) -> int:
        return self.knots.size - 1

    def integral(self) -> float:
        return trapezoid_mass(self.knots, self.densities)

    def has_jumps(self) -> bool:
        return bool(np.any(np.diff(self.knots) == 0))


def build(name: str, knots, densities, auto_normalize: bool = False) -> PiecewiseLinearDensity:
    """Validate knot/value pairs and return a density.

    With ``auto_normalize`` the values are rescaled to unit mass; otherwise
    the mass must already be 1 within 1e-6.
    """
    knots = np.asarray(knots, dtype=float)
    dens = np.asarray(densities, dtype=float)
    if knots.ndim != 1 or dens.ndim != 1 or knots.size != dens.size:
        raise InvalidInputError("knots and densities must have equal length")
    if knots.size < 2:
        raise InvalidInputError("at least two knots are required")
    if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(dens))):
        raise InvalidInputError("knots and densities must be finite")
    if np.any(np.diff(knots) <= 0):
        raise InvalidInputError("knots must be strictly increasing")
    if np.any(dens < 0):
        raise InvalidInputError("densities must be non-negative")
    if not np.any(dens > 0):
        raise InvalidInputError("at least one density must be positive")
    mass = trapezoid_mass(knots, dens)
    if auto_normalize:
        dens = dens / mass
    elif abs(mass - 1.0) > NORMALIZATION_TOL:
        raise InvalidInputError(f"density integrates to {mass!r}, expected 1")
    return PiecewiseLinearDensity(name, knots, dens)


def _scalar_or_array(x, scalar):
    return float(x) if scalar else x


def pdf(d: PiecewiseLinearDensity, g):
    g_arr = np.asarray(g, dtype=float)
    scalar = g_arr.ndim == 0
    g_arr = np.atleast_1d(g_arr)
    k, y = d.knots, d.densities
    last = k.size - 1
    lo = np.searchsorted(k, g_arr, side="left")
    hi = np.searchsorted(k, g_arr, side="right")
    j = np.clip(hi - 1, 0, last - 1)
    h = k[j + 1] - k[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(h > 0, (g_arr - k[j]) / np.where(h > 0, h, 1.0), 0.0)
    val = y[j] + (y[j + 1] - y[j]) * frac
    # on a knot (or a jump) report the larger one-sided value: closed support
    on_knot = hi > lo
    at = np.maximum(y[np.clip(lo, 0, last)], y[np.clip(hi - 1, 0, last)])
    val = np.where(on_knot, at, val)
    val = np.where((g_arr < k[0]) | (g_arr > k[-1]), 0.0, val)
    return _scalar_or_array(val[0] if scalar else val, scalar)


def cdf(d: PiecewiseLinearDensity, g):
    g_arr = np.asarray(g, dtype=float)
    scalar = g_arr.ndim == 0
    g_arr = np.atleast_1d(g_arr)
    k, y, cum = d.knots, d.densities, d.cum
    j = np.clip(np.searchsorted(k, g_arr, side="right") - 1, 0, k.size - 2)
    h = k[j + 1] - k[j]
    t = np.clip(g_arr - k[j], 0.0, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(h > 0, (y[j + 1] - y[j]) / np.where(h > 0, h, 1.0), 0.0)
    val = cum[j] + y[j] * t + 0.5 * m * t * t
    val = np.clip(val, 0.0, 1.0)
    val = np.where(g_arr < k[0], 0.0, val)
    val = np.where(g_arr >= k[-1], 1.0, val)
    return _scalar_or_array(val[0] if scalar else val, scalar)


def quantile(d: PiecewiseLinearDensity, p):
    """Smallest grip g with cdf(d, g) >= p.

    On zero-density plateaus the left edge of the plateau is returned.
    """
    p_arr = np.asarray(p, dtype=float)
    scalar = p_arr.ndim == 0
    p_arr = np.atleast_1d(p_arr)
    if np.any(~np.isfinite(p_arr)) or np.any((p_arr < 0) | (p_arr > 1)):
        raise InvalidInputError("probability must lie in [0, 1]")
    out = _kernels.quantile_many(d.knots, d.densities, d.cum, np.ascontiguousarray(p_arr.ravel()))
    out = out.reshape(p_arr.shape)
    return _scalar_or_array(out[0] if scalar else out, scalar)


def moments(d: PiecewiseLinearDensity) -> tuple[float, float]:
    """(mean, median)."""
    return d.mean, quantile(d, 0.5)


def variance(d: PiecewiseLinearDensity) -> float:
    return _analytic_variance(d.knots, d.densities, d.mean)


def sample(d: PiecewiseLinearDensity, u) -> np.ndarray:
    """Inverse-CDF transform of uniforms ``u`` in [0, 1)."""
    u = np.ascontiguousarray(np.asarray(u, dtype=float).ravel())
    return _kernels.quantile_many(d.knots, d.densities, d.cum, u)


# -- histograms and fitting ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class GripHistogram:
    name: str
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.array(self.edges, dtype=float)
        counts = np.array(self.counts, dtype=float)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise InvalidInputError("need len(edges) == len(counts) + 1")
        if counts.size < 1 or not np.all(np.isfinite(edges)) or not np.all(np.isfinite(counts)):
            raise InvalidInputError("histogram must be finite and non-empty")
        if np.any(np.diff(edges) <= 0):
            raise InvalidInputError("bin edges must be strictly increasing")
        if np.any(counts < 0) or counts.sum() <= 0:
            raise InvalidInputError("counts must be non-negative with positive total")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_samples(cls, name, samples, bins, range=None):
        counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins, range=range)
        return cls(name, edges, counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.counts.sum() * np.diff(self.edges))

    def nonzero_span(self) -> tuple[float, float]:
        nz = np.flatnonzero(self.counts > 0)
        return float(self.edges[nz[0]]), float(self.edges[nz[-1] + 1])


def histogram_mse(h: GripHistogram, d: PiecewiseLinearDensity) -> float:
    """Mean over bin centres of (histogram density - pdf)**2."""
    return float(np.mean((h.density - pdf(d, h.centers)) ** 2))


def _check_fit_inputs(h: GripHistogram, n_intervals: int):
    if n_intervals < 2:
        raise InvalidInputError("n_intervals must be at least 2")
    if h.counts.size < n_intervals + 1:
        raise InvalidInputError(
            f"histogram needs at least {n_intervals + 1} bins, got {h.counts.size}")
    a, b = h.nonzero_span()
    if b - a <= np.spacing(max(abs(a), abs(b))):
        raise InvalidInputError("histogram support is degenerate")
    return a, b


def _knots_from_logits(a, b, logits):
    z = np.concatenate((logits, [0.0]))
    z = np.exp(z - z.max())
    knots = np.empty(z.size + 1)
    knots[0] = a
    knots[1:] = a + (b - a) * (np.cumsum(z) / z.sum())
    knots[-1] = b
    return knots


def _density_from_params(name, a, b, n, params):
    knots = _knots_from_logits(a, b, params[: n - 1])
    return build(name, knots, params[n - 1:] ** 2, auto_normalize=True)


def initial_density(h: GripHistogram, n_intervals: int = 20) -> PiecewiseLinearDensity:
    """Equally spaced knots carrying the histogram density at each knot."""
    a, b = _check_fit_inputs(h, n_intervals)
    return _density_from_params(h.name, a, b, n_intervals, _initial_params(h, a, b, n_intervals))


def _initial_params(h, a, b, n):
    knots = np.linspace(a, b, n + 1)
    nz = np.flatnonzero(h.counts > 0)
    bins = np.clip(np.searchsorted(h.edges, knots, side="right") - 1, nz[0], nz[-1])
    return np.concatenate((np.zeros(n - 1), np.sqrt(h.density[bins])))


def fit_from_histogram(h: GripHistogram, n_intervals: int = 20,
                       options: SimplexOptions | None = None) -> PiecewiseLinearDensity:
    """Fit a piecewise-linear density to a normalized grip histogram.

    Knot positions and knot densities are optimised jointly with Nelder-Mead.
    The end knots stay on the span of non-empty bins; interior knots are
    parameterised by softmax increments (always ordered) and densities by
    their square roots (always non-negative).
    """
    a, b = _check_fit_inputs(h, n_intervals)
    n = n_intervals
    x0 = _initial_params(h, a, b, n)

    def objective(params):
        knots = _knots_from_logits(a, b, params[: n - 1])
        if np.any(np.diff(knots) <= 0):
            return 1e10
        dens = params[n - 1:] ** 2
        if not np.any(dens > 0):
            return 1e10
        return histogram_mse(h, build(h.name, knots, dens, auto_normalize=True))

    res = minimize(objective, x0, options)
    if not np.isfinite(res.fun) or res.fun >= 1e10:
        raise NumericalFailure(f"fit of {h.name!r} found no valid density")
    return _density_from_params(h.name, a, b, n, res.x)
