from __future__ import annotations

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvrs import pl_density as pld
from gvrs.errors import InvalidInputError
from gvrs.nelder_mead import SimplexOptions

from conftest import random_density

UNIFORM = pld.build("custom", [0.1, 0.82], [1 / 0.72, 1 / 0.72])
TRIANGLE = pld.build("custom", [0.0, 0.5, 1.0], [0.0, 2.0, 0.0])


def mp_cdf(d, g):
    """Independent oracle: adaptive quadrature of the interpolated pdf."""
    k = [mpmath.mpf(float(x)) for x in d.knots]
    y = [mpmath.mpf(float(v)) for v in d.densities]
    g = mpmath.mpf(float(g))
    total = mpmath.mpf(0)
    for i in range(len(k) - 1):
        a, b = k[i], min(k[i + 1], g)
        if b <= a:
            break
        f = lambda x, i=i: y[i] + (y[i + 1] - y[i]) * (x - k[i]) / (k[i + 1] - k[i])
        total += mpmath.quad(f, [a, b])
    return total


# -- build ---------------------------------------------------------------------

def test_build_examples():
    assert UNIFORM.integral() == pytest.approx(1, abs=1e-12)
    assert TRIANGLE.integral() == 1.0
    d = pld.build("custom", [0, 1], [3, 3], auto_normalize=True)
    np.testing.assert_allclose(d.densities, [1, 1])


@pytest.mark.parametrize("knots,dens", [
    ([0, 0.5, 0.4], [1, 1, 1]),
    ([0, 0.5, 0.5], [1, 1, 1]),
    ([0, 1], [-1, 3]),
    ([0, 1], [0, 0]),
    ([0, 1, 2], [1, 1]),
    ([0.0], [1.0]),
    ([0, 1], [0.5, 0.5]),
])
def test_build_rejects(knots, dens):
    with pytest.raises(InvalidInputError):
        pld.build("custom", knots, dens)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auto_normalize_exact(seed):
    d = random_density(np.random.default_rng(seed))
    assert abs(d.integral() - 1) <= 1e-12


def test_density_is_immutable():
    with pytest.raises(ValueError):
        UNIFORM.knots[0] = 0.0


# -- pdf / cdf / quantile --------------------------------------------------------

def test_pdf_examples():
    assert pld.pdf(UNIFORM, 0.5) == pytest.approx(1 / 0.72)
    assert pld.pdf(TRIANGLE, 0.25) == pytest.approx(1.0)
    assert pld.pdf(TRIANGLE, -0.1) == 0.0 and pld.pdf(TRIANGLE, 1.1) == 0.0


def test_cdf_examples():
    assert pld.cdf(UNIFORM, 0.46) == pytest.approx(0.5, abs=1e-12)
    assert pld.cdf(TRIANGLE, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert pld.cdf(TRIANGLE, -1) == 0.0 and pld.cdf(TRIANGLE, 2) == 1.0
    assert pld.cdf(UNIFORM, 0.1) == 0.0
    assert abs(pld.cdf(UNIFORM, 0.82) - 1) <= 1e-12


def test_quantile_examples():
    assert pld.quantile(UNIFORM, 0.05) == pytest.approx(0.136, abs=1e-12)
    assert pld.quantile(TRIANGLE, 0.125) == pytest.approx(0.25, abs=1e-12)
    for d in (UNIFORM, TRIANGLE):
        assert pld.quantile(d, 0.0) == d.knots[0]
        assert pld.quantile(d, 1.0) == d.knots[-1]


@pytest.mark.parametrize("p", [-0.1, 1.1, np.nan])
def test_quantile_rejects(p):
    with pytest.raises(InvalidInputError):
        pld.quantile(UNIFORM, p)


def test_plateau_returns_left_edge():
    # all mass lies below 0.4; the trailing zero stretch is a plateau
    d = pld.build("custom", [0, 0.2, 0.4, 0.6, 0.8], [2.5, 2.5, 0, 0, 0], auto_normalize=True)
    assert pld.quantile(d, 1.0) == 0.4
    two = pld.build("custom", [0, 0.4, 0.4000001, 0.6, 1.0], [1.25, 1.25, 0, 0, 1.25],
                    auto_normalize=True)
    c = float(pld.cdf(two, 0.4000001))
    assert pld.quantile(two, c) <= 0.4000001


def test_cdf_matches_quadrature_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = random_density(rng, n=int(rng.integers(2, 8)))
        for g in rng.uniform(d.knots[0], d.knots[-1], 5):
            assert abs(pld.cdf(d, g) - float(mp_cdf(d, g))) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1 - 1e-6))
def test_quantile_round_trip(seed, p):
    d = random_density(np.random.default_rng(seed))
    q = pld.quantile(d, p)
    assert abs(pld.cdf(d, q) - p) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cdf_monotone(seed):
    d = random_density(np.random.default_rng(seed))
    g = np.linspace(d.knots[0] - 0.1, d.knots[-1] + 0.1, 500)
    assert np.all(np.diff(pld.cdf(d, g)) >= 0)


def test_quantile_is_smallest_admissible():
    rng = np.random.default_rng(3)
    for _ in range(50):
        d = random_density(rng)
        for p in (0.05, 0.5, 0.95):
            q = pld.quantile(d, p)
            assert pld.cdf(d, q) >= p - 1e-12
            assert pld.cdf(d, q - 1e-7) < p + 1e-12


# -- moments --------------------------------------------------------------------

def test_moment_examples():
    assert pld.moments(UNIFORM) == pytest.approx((0.46, 0.46), abs=1e-12)
    assert pld.moments(TRIANGLE) == pytest.approx((0.5, 0.5), abs=1e-12)
    d = pld.build("custom", [0, 1], [2, 0])
    assert d.mean == pytest.approx(1 / 3, abs=1e-15)
    assert pld.variance(UNIFORM) == pytest.approx(0.72 ** 2 / 12, rel=1e-12)


def test_mean_against_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(5):
        d = random_density(rng)
        x = pld.sample(d, rng.random(10**6))
        se = x.std() / np.sqrt(x.size)
        assert abs(x.mean() - d.mean) < 3 * se + 1e-12


# -- histograms and fitting ------------------------------------------------------------

def test_histogram_density():
    h = pld.GripHistogram("custom", [0, 1, 3], [2, 2])
    np.testing.assert_allclose(h.density, [0.5, 0.25])
    with pytest.raises(InvalidInputError):
        pld.GripHistogram("custom", [0, 1], [0])
    with pytest.raises(InvalidInputError):
        pld.GripHistogram("custom", [0, 1, 0.5], [1, 1])


def test_fit_rejects():
    h = pld.GripHistogram("custom", np.linspace(0, 1, 11), np.ones(10))
    with pytest.raises(InvalidInputError):
        pld.fit_from_histogram(h, 1)
    with pytest.raises(InvalidInputError):
        pld.fit_from_histogram(h, 10)


def test_fit_uniform():
    rng = np.random.default_rng(0)
    h = pld.GripHistogram.from_samples("custom", rng.uniform(0.1, 0.82, 10**6), 72, (0.1, 0.82))
    d = pld.fit_from_histogram(h)
    assert np.max(np.abs(pld.pdf(d, h.centers) - 1 / 0.72)) < 0.05
    assert abs(d.integral() - 1) < 1e-9


def test_fit_flat_histogram():
    h = pld.GripHistogram("custom", np.linspace(0.2, 0.6, 41), np.full(40, 10.0))
    d = pld.fit_from_histogram(h, 4)
    flat = pld.build("custom", [0.2, 0.6], [2.5, 2.5])
    assert pld.histogram_mse(h, d) <= pld.histogram_mse(h, flat) + 1e-6


def test_fit_triangle_median_and_never_worse():
    rng = np.random.default_rng(1)
    x = pld.sample(TRIANGLE, rng.random(10**6))
    h = pld.GripHistogram.from_samples("custom", x, 60, (0, 1))
    d = pld.fit_from_histogram(h)
    assert abs(pld.quantile(d, 0.5) - 0.5) < 0.02
    assert pld.histogram_mse(h, d) <= pld.histogram_mse(h, pld.initial_density(h))


def test_fit_respects_budget_option():
    h = pld.GripHistogram("custom", np.linspace(0, 1, 11), np.arange(1, 11))
    d = pld.fit_from_histogram(h, 3, SimplexOptions(max_evals=50, restarts=0))
    assert d.support == (0.0, 1.0)
    assert pld.histogram_mse(h, d) <= pld.histogram_mse(h, pld.initial_density(h, 3))
