"""Baseline grip uncertainty heads and the training losses.

Ensembles and MC dropout both reduce a stack of point predictions to a
Gaussian; the Gaussian head predicts (mu, log-variance); the quantile head
predicts the 5th and 95th percentiles directly.  Every loss returns its value
together with the analytic gradient so external trainers can use it and so
the gradients can be checked numerically.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .errors import InvalidInputError
from .mixture import PERCENTILES, GripSummaryRaster

ALPHA_LOW = 0.05
ALPHA_HIGH = 0.95
LOG_VAR_CAP = 60.0
FOCAL_P_FLOOR = 1e-12


def normal_quantile(p):
    """Standard normal inverse CDF."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p_arr)) or np.any((p_arr <= 0) | (p_arr >= 1)):
        raise InvalidInputError("p must lie strictly inside (0, 1)")
    z = ndtri(p_arr)
    return float(z) if z.ndim == 0 else z


# -- prediction combiners -------------------------------------------------------

def ensemble_stats(stack):
    """Per-pixel mean and population variance over the first axis."""
    f = np.asarray(stack, dtype=float)
    if f.ndim < 1 or f.shape[0] < 2:
        raise InvalidInputError("an ensemble needs at least two members")
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("ensemble predictions must be finite")
    mean = f.mean(axis=0)
    var = np.mean((mean - f) ** 2, axis=0)
    return mean, var


def _summary_from_sigma(mu, sigma, method, percentiles=PERCENTILES) -> GripSummaryRaster:
    z_lo, z_hi = normal_quantile(percentiles[0]), normal_quantile(percentiles[1])
    return GripSummaryRaster(
        mean=mu.copy(), median=mu.copy(),
        p05=mu + z_lo * sigma, p95=mu + z_hi * sigma,
        sigma_low=mu - sigma, sigma_high=mu + sigma,
        method=method)


def gaussian_summary(mu, s, method: str = "gaussian",
                     percentiles=PERCENTILES) -> GripSummaryRaster:
    """Summary of N(mu, exp(s)) per pixel; ``s`` is clipped to +-60.

    The sigma interval is exactly mu -+ sigma.
    """
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(s, dtype=float)
    if mu.shape != s.shape:
        raise InvalidInputError("mu and s must have the same shape")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(s))):
        raise InvalidInputError("mu and s must be finite")
    sigma = np.exp(0.5 * np.clip(s, -LOG_VAR_CAP, LOG_VAR_CAP))
    return _summary_from_sigma(mu, sigma, method, percentiles)


def _stack_summary(stack, method):
    # sigma straight from the variance: identical members give zero width
    mean, var = ensemble_stats(stack)
    return _summary_from_sigma(mean, np.sqrt(var), method)


def ensemble_summary(stack) -> GripSummaryRaster:
    return _stack_summary(stack, "ensemble")


def mc_dropout_summary(stack) -> GripSummaryRaster:
    return _stack_summary(stack, "mc_dropout")


def quantile_summary(q_low, q_high) -> GripSummaryRaster:
    """Interval from a two-quantile head; crossed pairs are swapped and flagged."""
    lo = np.asarray(q_low, dtype=float)
    hi = np.asarray(q_high, dtype=float)
    if lo.shape != hi.shape:
        raise InvalidInputError("q_low and q_high must have the same shape")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidInputError("quantile predictions must be finite")
    crossed = lo > hi
    return GripSummaryRaster(
        mean=0.5 * (lo + hi), median=None,
        p05=np.minimum(lo, hi), p95=np.maximum(lo, hi),
        sigma_low=None, sigma_high=None, method="quantile", crossed=crossed)


# -- losses ---------------------------------------------------------------------

def _vectors(*arrays):
    out = [np.atleast_1d(np.asarray(a, dtype=float)) for a in arrays]
    n = out[0].shape
    if any(a.shape != n for a in out) or out[0].ndim != 1:
        raise InvalidInputError("loss inputs must be 1-D vectors of equal length")
    if n[0] == 0:
        raise InvalidInputError("loss inputs must not be empty")
    return out


def _check_weights(w):
    if np.any(w < 0):
        raise InvalidInputError("weights must be non-negative")


def weighted_mse_loss(y, f, w):
    """(1/N) sum w (y - f)^2 and its gradient with respect to f."""
    y, f, w = _vectors(y, f, w)
    _check_weights(w)
    n = y.size
    r = y - f
    return float(np.sum(w * r * r) / n), -2.0 * w * r / n


def gaussian_nll_loss(y, mu, s, w):
    """Heteroscedastic Gaussian NLL in log-variance form.

    Returns (loss, d loss / d mu, d loss / d s).
    """
    y, mu, s, w = _vectors(y, mu, s, w)
    _check_weights(w)
    n = y.size
    r = y - mu
    inv = np.exp(-s)
    loss = float(np.sum(w * (0.5 * inv * r * r + 0.5 * s)) / n)
    d_mu = -(w / n) * inv * r
    d_s = (w / n) * (-0.5 * inv * r * r + 0.5)
    return loss, d_mu, d_s


def pinball(y, yhat, alpha):
    """alpha*(y - yhat) when y > yhat, else (1 - alpha)*(yhat - y)."""
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    d = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    out = np.where(d > 0, alpha * d, (alpha - 1.0) * d) + 0.0
    return float(out) if out.ndim == 0 else out


def pinball_grad(y, yhat, alpha):
    """d pinball / d yhat; at y == yhat the lower branch's slope (1 - alpha) applies."""
    d = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    g = np.where(d > 0, -alpha, 1.0 - alpha)
    return float(g) if g.ndim == 0 else g


def quantile_loss(y, q_low, q_high, w, alpha_low=ALPHA_LOW, alpha_high=ALPHA_HIGH):
    """Two-quantile pinball loss; returns (loss, d/d q_low, d/d q_high)."""
    y, q_low, q_high, w = _vectors(y, q_low, q_high, w)
    _check_weights(w)
    n = y.size
    per = pinball(y, q_low, alpha_low) + pinball(y, q_high, alpha_high)
    loss = float(np.sum(w * per) / n)
    return (loss, (w / n) * pinball_grad(y, q_low, alpha_low),
            (w / n) * pinball_grad(y, q_high, alpha_high))


def focal_loss(class_probs, y, gamma, w):
    """Focal loss over N pixels.

    class_probs: (N, K) softmax outputs (a single K-vector is treated as
    N = 1); y: true class per pixel; w: pixel weights.  Returns the mean loss
    and its gradient with respect to the true-class probability of each
    pixel.
    """
    probs = np.asarray(class_probs, dtype=float)
    if probs.ndim == 1:
        probs = probs[None, :]
    y = np.atleast_1d(np.asarray(y))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    n, k = probs.shape
    if y.shape != (n,) or w.shape != (n,):
        raise InvalidInputError("y and w need one entry per pixel")
    if not np.issubdtype(y.dtype, np.integer) or np.any((y < 0) | (y >= k)):
        raise InvalidInputError(f"class index must lie in 0..{k - 1}")
    if gamma < 0:
        raise InvalidInputError("gamma must be non-negative")
    _check_weights(w)
    p = np.maximum(probs[np.arange(n), y], FOCAL_P_FLOOR)
    q = 1.0 - p
    logp = np.log(p)
    mod = q ** gamma
    loss = float(np.sum(w * (-mod * logp)) / n)
    # gamma * q^(gamma-1) * log p -> 0 as p -> 1
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(q > 0, gamma * q ** (gamma - 1.0) * logp, 0.0)
    grad = (w / n) * (first - mod / p)
    return loss, grad
