"""Compiled inner loops shared by the scalar and raster code paths.

Every quantile in the package, whether for a single density or for a whole
probability raster, ends in ``solve_segment``; mixture rows are always formed
by ``mix_at`` with the same summation order.  That is what makes the batched
raster results bit-identical to the per-pixel ones.
"""

import math

import numpy as np
from numba import njit

SLOPE_EPS = 1e-14


@njit(cache=True, nogil=True)
def solve_segment(x0, h, y0, y1, c0, p):
    """Grip inside [x0, x0+h] where the cumulative mass reaches ``p``.

    Solves 0.5*m*t**2 + y0*t - (p - c0) = 0 for the root in [0, h] using the
    cancellation-free form t = 2r / (y0 + sqrt(y0**2 + 2*m*r)).
    """
    r = p - c0
    if r <= 0.0 or h <= 0.0:
        return x0
    m = (y1 - y0) / h
    if abs(m) < SLOPE_EPS:
        if y0 <= 0.0:
            return x0 + h
        t = r / y0
    else:
        disc = y0 * y0 + 2.0 * m * r
        if disc < 0.0:
            disc = 0.0
        den = y0 + math.sqrt(disc)
        if den <= 0.0:
            return x0 + h
        t = 2.0 * r / den
    if t > h:
        t = h
    elif t < 0.0:
        t = 0.0
    return x0 + t


@njit(cache=True, nogil=True)
def quantile_row(knots, dens, cum, p):
    """Smallest grip whose CDF reaches ``p`` (lower-bound bracketing)."""
    n = knots.shape[0]
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] < p:
            lo = mid + 1
        else:
            hi = mid
    if lo == 0:
        return knots[0]
    if lo == n:
        return knots[n - 1]
    if cum[lo] == p:
        # exact hit: avoids the ill-conditioned double root where the pdf ends at 0
        return knots[lo]
    j = lo - 1
    return solve_segment(knots[j], knots[j + 1] - knots[j], dens[j], dens[j + 1], cum[j], p)


@njit(cache=True, nogil=True)
def quantile_many(knots, dens, cum, ps):
    out = np.empty(ps.shape[0])
    for i in range(ps.shape[0]):
        out[i] = quantile_row(knots, dens, cum, ps[i])
    return out


# The mixture kernels are specialised to the five surface states: the
# unrolled sums are several times faster than a loop over a weight array.
# Both keep strict left-to-right summation order.

N_CLASSES = 5


@njit(cache=True, nogil=True)
def normalized_weights(probs):
    s = probs[0] + probs[1] + probs[2] + probs[3] + probs[4]
    return (probs[0] / s, probs[1] / s, probs[2] / s, probs[3] / s, probs[4] / s)


@njit(cache=True, nogil=True)
def mix_at(w, table, j):
    """sum_c w[c] * table[j, c]; ``table`` is knot-major (V, 5)."""
    return (w[0] * table[j, 0] + w[1] * table[j, 1] + w[2] * table[j, 2]
            + w[3] * table[j, 3] + w[4] * table[j, 4])


@njit(cache=True, nogil=True)
def mix_mean(w, means):
    return w[0] * means[0] + w[1] * means[1] + w[2] * means[2] + w[3] * means[3] + w[4] * means[4]


@njit(cache=True, nogil=True)
def mix_rows(w, pdf_table, cdf_table):
    v = pdf_table.shape[0]
    dens = np.empty(v)
    cum = np.empty(v)
    for j in range(v):
        dens[j] = mix_at(w, pdf_table, j)
        cum[j] = mix_at(w, cdf_table, j)
    return dens, cum


@njit(cache=True, nogil=True)
def mixture_quantile(w, knots, pdf_table, cdf_table, p):
    """``quantile_row`` on the mixed rows without materialising them."""
    n = knots.shape[0]
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) >> 1
        if mix_at(w, cdf_table, mid) < p:
            lo = mid + 1
        else:
            hi = mid
    if lo == 0:
        return knots[0]
    if lo == n:
        return knots[n - 1]
    if mix_at(w, cdf_table, lo) == p:
        return knots[lo]
    j = lo - 1
    return solve_segment(knots[j], knots[j + 1] - knots[j],
                         mix_at(w, pdf_table, j), mix_at(w, pdf_table, j + 1),
                         mix_at(w, cdf_table, j), p)


@njit(cache=True, nogil=True)
def fuse_block(probs, knots, pdf_table, cdf_table, means, levels, out):
    """Per-pixel mixture summaries.

    probs: (N, 5) class probabilities; tables are knot-major (V, 5); out:
    (N, 1 + len(levels)) receiving the mean and then one quantile per level.
    """
    for i in range(probs.shape[0]):
        w = normalized_weights(probs[i])
        out[i, 0] = mix_mean(w, means)
        for q in range(levels.shape[0]):
            out[i, q + 1] = mixture_quantile(w, knots, pdf_table, cdf_table, levels[q])


@njit(cache=True, nogil=True)
def fnv1a64(data):
    """64-bit FNV-1a over a uint8 array (wrapping uint64 arithmetic)."""
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h
