from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvrs import metrics as mt
from gvrs.errors import InvalidInputError
from gvrs.mixture import GripSummaryRaster


def sample(rows, grips, height=101, horizon=1, sid="s", cols=None):
    rows = np.asarray(rows)
    cols = np.zeros_like(rows) if cols is None else cols
    return mt.GroundTruthSample(sid, rows, cols, grips, np.zeros_like(rows), height, horizon)


def summary_for(s, mean, p05, p95, median=None, slo=None, shi=None, shape=None):
    shape = shape or (s.height, int(s.cols.max()) + 1)

    def place(v):
        if v is None:
            return None
        out = np.full(shape, np.nan)
        out[s.rows, s.cols] = v
        return out
    return GripSummaryRaster(place(mean), place(median), place(p05), place(p95),
                             place(slo), place(shi))


def test_weight_examples():
    s = sample([100, 100, 100], [0.5] * 3)
    np.testing.assert_array_equal(mt.pixel_weights(s), 1.0)
    s = sample([26, 76], [0.5, 0.5])
    np.testing.assert_allclose(mt.pixel_weights(s), [0.5, 1.5])
    assert mt.pixel_weights(sample([40], [0.5]))[0] == 1.0


def test_weight_floor_and_errors():
    s = sample([1, 101 - 1], [0.5, 0.5])
    w = mt.pixel_weights(s)
    assert w[0] / w[1] == pytest.approx(1e-3)
    with pytest.raises(InvalidInputError):
        mt.pixel_weights(sample([1, 1], [0.5, 0.5]))
    with pytest.raises(InvalidInputError):
        sample([200], [0.5])
    with pytest.raises(InvalidInputError):
        mt.GroundTruthSample("s", [], [], [], [], 10, 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(2, 100), min_size=1, max_size=50))
def test_weights_mean_one(rows):
    w = mt.pixel_weights(sample(rows, [0.5] * len(rows)))
    assert abs(w.mean() - 1) <= 1e-12


def test_clamp_examples():
    assert mt.clamp_interval_for_eval(0.85, 0.90) == pytest.approx((0.81, 0.82))
    assert mt.clamp_interval_for_eval(0.05, 0.815) == pytest.approx((0.10, 0.82))
    assert mt.clamp_interval_for_eval(0.3, 0.5) == (0.3, 0.5)
    assert mt.clamp_interval_for_eval(0.5, 0.05) == (0.5, 0.5)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1, 2), st.floats(-1, 2))
def test_clamp_idempotent(a, b):
    once = mt.clamp_interval_for_eval(a, b)
    assert mt.clamp_interval_for_eval(*once) == once


def test_sample_metrics_examples():
    g = np.linspace(0.3, 0.6, 10)
    # all on the bottom row, so weights are uniform
    s_uniform = sample(np.full(10, 100), g, cols=np.arange(10))
    lo = np.full(10, 0.25)
    hi = np.where(np.arange(10) == 9, 0.55, 0.65)
    r = mt.sample_metrics(summary_for(s_uniform, g, lo, hi), s_uniform)
    assert r.f_90 == pytest.approx(0.9)
    assert r.mse_mean == 0.0
    assert r.mse_median is None and r.f_sigma is None


def test_boundary_convention():
    s = sample([50], [0.4])
    r = mt.sample_metrics(summary_for(s, 0.4, 0.4, 0.5), s)
    assert r.f_over_p5 == 0.0 and r.f_90 == 1.0
    assert r.violations.size == 0


def test_missing_pixel_rejected():
    s = sample([50, 60], [0.4, 0.5])
    good = summary_for(s, [0.4, 0.5], [0.3, 0.3], [0.6, 0.6])
    small = GripSummaryRaster(*(a[:55] for a in (good.mean,)), None, good.p05[:55],
                              good.p95[:55], None, None)
    with pytest.raises(InvalidInputError):
        mt.sample_metrics(small, s)
    holes = summary_for(s, [0.4, np.nan], [0.3, 0.3], [0.6, 0.6])
    with pytest.raises(InvalidInputError):
        mt.sample_metrics(holes, s)


def _rec(sid, mse, f=1.0, viol=()):
    return mt.SampleMetrics(sid, 3, mse, mse, f, f, f, 0.2, 0.3, np.array(viol), 0.5, 0.3)


def test_aggregate_examples():
    rep = mt.aggregate([_rec("a", 0.0025), _rec("b", 0.0075)])
    assert rep.rmse_mean == pytest.approx(np.sqrt(0.005))
    assert rep.F_over_P5 == 100.0
    assert rep.viol_p50 is None
    rep = mt.aggregate([_rec("a", 0.0, viol=(0.01, 0.03, 0.10))])
    assert rep.viol_p50 == pytest.approx(0.03)
    assert rep.viol_p90 == pytest.approx(0.086)
    with pytest.raises(InvalidInputError):
        mt.aggregate([])


def test_aggregate_modes_and_absent_fields():
    recs = [_rec("a", 0.01, viol=(0.1,)), _rec("b", 0.01, viol=(0.2, 0.4)), _rec("c", 0.01)]
    per = mt.aggregate(recs)
    pooled = mt.aggregate(recs, violation_mode="pooled")
    assert per.viol_p50 == pytest.approx((0.1 + 0.3) / 2)
    assert pooled.viol_p50 == pytest.approx(0.2)
    q = mt.SampleMetrics("q", 3, 0.01, None, None, 0.9, 0.95, 0.2, 0.3, np.array([]), 0.5, 0.3)
    rep = mt.aggregate([q], "quantile")
    assert rep.rmse_median is None and rep.F_sigma is None
    with pytest.raises(InvalidInputError):
        mt.aggregate(recs, violation_mode="median")


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    recs = [_rec(f"s{i}", rng.random() * 0.01, rng.random(), tuple(rng.random(3)))
            for i in range(30)]
    a = mt.aggregate(recs)
    b = mt.aggregate(recs[::-1])
    assert a == b


def test_widening_never_decreases_coverage():
    rng = np.random.default_rng(1)
    rows = rng.integers(11, 100, 200)
    s = sample(rows, rng.uniform(0.1, 0.8, 200), horizon=10, cols=np.arange(200))
    lo, hi = rng.uniform(0.1, 0.5, 200), rng.uniform(0.4, 0.8, 200)
    a = mt.sample_metrics(summary_for(s, lo, lo, hi), s)
    b = mt.sample_metrics(summary_for(s, lo, lo - 0.05, hi + 0.05), s)
    assert b.f_90 >= a.f_90 and b.f_over_p5 >= a.f_over_p5


def test_calibration_soundness_with_exact_quantiles():
    rng = np.random.default_rng(2)
    n = 10**5
    rows = rng.integers(11, 100, n)
    g = rng.uniform(0.2, 0.7, n)
    s = sample(rows, g, horizon=10, cols=np.arange(n))
    summ = summary_for(s, np.full(n, 0.45), np.full(n, 0.225), np.full(n, 0.675))
    r = mt.aggregate([mt.sample_metrics(summ, s, clamp=False)])
    se = 100 * np.sqrt(0.95 * 0.05 / n) * np.sqrt(np.mean(mt.pixel_weights(s) ** 2))
    assert abs(r.F_over_P5 - 95) < 3 * se
    assert abs(r.F_90 - 90) < 3 * 100 * np.sqrt(0.9 * 0.1 / n) * 1.2


def test_unweighted_coverage_option():
    s = sample([20, 100], [0.5, 0.9], horizon=10)
    summ = summary_for(s, [0.5, 0.5], [0.4, 0.4], [0.6, 0.6])
    w = mt.sample_metrics(summ, s, clamp=False)
    u = mt.sample_metrics(summ, s, clamp=False, weighted_coverage=False)
    assert u.f_90 == 0.5
    assert w.f_90 == pytest.approx(mt.pixel_weights(s)[0] / 2)


def test_format_table():
    rep = mt.aggregate([_rec("a", 0.01)], "gvrs")
    text = mt.format_table([rep])
    assert "gvrs" in text and "rmse_mean" in text
