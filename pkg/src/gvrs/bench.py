"""Synthetic benchmark: every method on the same simulated scenes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines, metrics
from .errors import InvalidInputError
from .mixture import GripSummaryRaster, fuse_raster, ideal_from_labels
from .synth import (ClassGripGenerator, SimulatorConfig, derive_seed, generate_scene,
                    scene_configs, simulate_classifier, simulate_regressors)

METHODS = ("ensemble", "mc_dropout", "gaussian", "quantile", "gvrs", "ideal_gvrs")


@dataclass(frozen=True)
class BenchConfig:
    scenes: int = 200
    height: int = 560
    width: int = 32
    horizon: int = 40
    layout: tuple = ()
    shuffle_layout: bool = True
    simulator: SimulatorConfig = SimulatorConfig()
    methods: tuple = METHODS
    clamp: bool = True
    weighted_coverage: bool = True
    violation_mode: str = "per_sample"
    workers: int = 1

    def __post_init__(self):
        if self.scenes < 1:
            raise InvalidInputError("need at least one scene")
        if not self.methods:
            raise InvalidInputError("no methods to evaluate")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise InvalidInputError(f"unknown method(s): {', '.join(unknown)}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods listed twice")
        if self.violation_mode not in ("per_sample", "pooled"):
            raise InvalidInputError(f"unknown violation mode {self.violation_mode!r}")


def _scatter(vec_summary: GripSummaryRaster, sample, shape) -> GripSummaryRaster:
    """Place per-pixel vectors into NaN rasters at the sample coordinates."""
    def place(v):
        if v is None:
            return None
        out = np.full(shape, np.nan)
        out[sample.rows, sample.cols] = v
        return out
    return GripSummaryRaster(
        mean=place(vec_summary.mean), median=place(vec_summary.median),
        p05=place(vec_summary.p05), p95=place(vec_summary.p95),
        sigma_low=place(vec_summary.sigma_low), sigma_high=place(vec_summary.sigma_high),
        method=vec_summary.method)


def method_summaries(methods, labels, sample, gen: ClassGripGenerator,
                     sim: SimulatorConfig, seed: int, workers: int = 1) -> dict:
    shape = labels.shape
    out = {}
    regs = None
    if any(m in methods for m in ("ensemble", "mc_dropout", "gaussian", "quantile")):
        regs = simulate_regressors(sample, gen, sim, derive_seed(seed, "regressors"))
    for m in methods:
        if m == "ensemble":
            s = _scatter(baselines.ensemble_summary(regs.ensemble), sample, shape)
        elif m == "mc_dropout":
            s = _scatter(baselines.mc_dropout_summary(regs.dropout), sample, shape)
        elif m == "gaussian":
            s = _scatter(baselines.gaussian_summary(regs.mu, regs.s), sample, shape)
        elif m == "quantile":
            s = _scatter(baselines.quantile_summary(regs.q_low, regs.q_high), sample, shape)
        elif m == "gvrs":
            probs = simulate_classifier(labels, sim, derive_seed(seed, "classifier"))
            s = fuse_raster(gen.table, probs, workers=workers)
        else:
            road = np.where(labels == 255, 0, labels)
            s = ideal_from_labels(gen.table, road, workers=workers)
        out[m] = s
    return out


def run_bench(cfg: BenchConfig, gen: ClassGripGenerator, seed: int):
    """Returns (reports in method order, per-method list of SampleMetrics)."""
    records = {m: [] for m in cfg.methods}
    for sc in scene_configs(cfg.scenes, cfg.height, cfg.width, cfg.horizon,
                            cfg.layout, seed, cfg.shuffle_layout):
        labels, sample = generate_scene(sc, gen)
        sums = method_summaries(cfg.methods, labels, sample, gen, cfg.simulator,
                                sc.seed, cfg.workers)
        for m, s in sums.items():
            records[m].append(metrics.sample_metrics(
                s, sample, clamp=cfg.clamp, weighted_coverage=cfg.weighted_coverage))
    reports = [metrics.aggregate(records[m], m, cfg.violation_mode) for m in cfg.methods]
    return reports, records
