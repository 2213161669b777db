"""Synthetic scenes, ground truth and simulated model outputs.

Everything here is a pure function of its configuration and a 64-bit seed.
Randomness comes from Philox streams keyed by (seed, tag); element ``i`` of a
stream depends only on the key and ``i``, so results do not depend on how the
work is split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Sequence

import numpy as np

from . import pl_density as pld
from .errors import InvalidInputError
from .fileio import fnv1a64, read_densities
from .metrics import GroundTruthSample
from .mixture import K, SurfaceState, _order_densities, build_mixture_table

NO_ROAD = 255
LAYOUT_TOL = 1e-9
DEFAULT_DENSITY_FILE = "default_densities_v1.csv"
_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *parts) -> int:
    """64-bit child seed for a named sub-task."""
    tag = "/".join(str(p) for p in (seed, *parts))
    return fnv1a64(tag.encode("utf-8"))


def stream(seed: int, tag: str) -> np.random.Generator:
    key = np.array([seed & _MASK64, fnv1a64(tag.encode("utf-8"))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# -- class grip generators --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassGripGenerator:
    """One sampling density per surface state, ordered by state code."""

    densities: tuple

    @classmethod
    def from_densities(cls, densities) -> "ClassGripGenerator":
        return cls(tuple(_order_densities(densities)))

    def __getitem__(self, state) -> pld.PiecewiseLinearDensity:
        return self.densities[int(SurfaceState.parse(state))]

    @cached_property
    def table(self):
        return build_mixture_table(self.densities)

    @cached_property
    def stats(self) -> np.ndarray:
        """(K, 4): mean, sd, 5th and 95th percentile per class."""
        rows = []
        for d in self.densities:
            q = pld.quantile(d, np.array([0.05, 0.95]))
            rows.append([d.mean, np.sqrt(pld.variance(d)), q[0], q[1]])
        return np.array(rows)


def default_class_densities() -> ClassGripGenerator:
    """Default shapes: dry near 0.82, snowy mostly in 0.3-0.4, icy lowest, wet widest."""
    path = resources.files("gvrs") / "data" / DEFAULT_DENSITY_FILE
    with resources.as_file(path) as p:
        return ClassGripGenerator.from_densities(read_densities(p, auto_normalize=True))


# -- scenes ----------------------------------------------------------------------------

def parse_layout(text: str) -> tuple:
    """'dry:0.5, wet:0.5' -> ((DRY, 0.5), (WET, 0.5))."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, frac = item.partition(":")
        if not sep:
            raise InvalidInputError(f"layout entry {item!r} must be state:fraction")
        try:
            f = float(frac)
        except ValueError:
            raise InvalidInputError(f"layout fraction {frac!r} is not a number") from None
        out.append((SurfaceState.parse(name), f))
    return tuple(out)


@dataclass(frozen=True)
class SceneConfig:
    height: int
    width: int
    horizon: int
    layout: tuple = ((SurfaceState.DRY, 1.0),)
    seed: int = 0
    sample_id: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 2:
            raise InvalidInputError("scene must be at least 2 x 1 pixels")
        if not 0 <= self.horizon < self.height:
            raise InvalidInputError("need 0 <= horizon < height")
        if not 0 <= self.seed <= _MASK64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if not self.layout:
            raise InvalidInputError("layout must not be empty")
        layout = tuple((SurfaceState.parse(s), float(f)) for s, f in self.layout)
        fr = np.array([f for _, f in layout])
        if np.any(~np.isfinite(fr)) or np.any(fr < 0):
            raise InvalidInputError("layout fractions must be non-negative")
        if abs(float(np.sum(fr)) - 1.0) > LAYOUT_TOL:
            raise InvalidInputError(f"layout fractions sum to {np.sum(fr):.12g}, not 1")
        object.__setattr__(self, "layout", layout)
        if not self.sample_id:
            object.__setattr__(self, "sample_id", f"scene-{self.seed:016x}")


@dataclass(frozen=True)
class SimulatorConfig:
    accuracy: float = 0.95
    temperature: float = 0.2
    noise_sigma: float = 0.02
    miscalibration: float = 1.0
    ensemble_size: int = 5
    dropout_samples: int = 10

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise InvalidInputError("accuracy must lie in [0, 1]")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be positive")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be non-negative")
        if not self.miscalibration > 0:
            raise InvalidInputError("miscalibration factor must be positive")
        if self.ensemble_size < 2 or self.dropout_samples < 2:
            raise InvalidInputError("ensembles need at least two members")


def row_states(cfg: SceneConfig) -> np.ndarray:
    """Surface state of every row from the horizon down, band by band."""
    n = cfg.height - cfg.horizon
    bounds = np.rint(np.cumsum([f for _, f in cfg.layout]) * n).astype(int)
    bounds[-1] = n
    states = np.empty(n, dtype=np.int64)
    start = 0
    for (state, _), stop in zip(cfg.layout, bounds):
        states[start:stop] = int(state)
        start = max(start, stop)
    return states


def wedge_mask(height: int, width: int, horizon: int) -> np.ndarray:
    """Drivable wedge: full width at the bottom row, one pixel at the horizon."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    cx = width // 2
    span = max(height - 1 - horizon, 1)
    half = np.floor((rows - horizon) / span * (width / 2.0))
    return (rows >= horizon) & (np.abs(cols - cx) <= half)


def generate_scene(cfg: SceneConfig, gen: ClassGripGenerator):
    """Label raster (uint8, 255 off-road) and centerline ground truth."""
    states = row_states(cfg)
    labels = np.full((cfg.height, cfg.width), NO_ROAD, dtype=np.uint8)
    mask = wedge_mask(cfg.height, cfg.width, cfg.horizon)
    by_row = np.full(cfg.height, NO_ROAD, dtype=np.int64)
    by_row[cfg.horizon:] = states
    labels[mask] = np.broadcast_to(by_row[:, None], labels.shape)[mask]

    rows = np.arange(cfg.horizon, cfg.height)
    cols = np.full(rows.size, cfg.width // 2)
    # element i of the stream belongs to row horizon + i
    u = stream(cfg.seed, "grip").random(rows.size)
    grips = np.empty(rows.size)
    for s in np.unique(states):
        sel = states == s
        grips[sel] = pld.sample(gen.densities[s], u[sel])
    sample = GroundTruthSample(cfg.sample_id, rows, cols, grips, states,
                               cfg.height, cfg.horizon)
    return labels, sample


# -- simulated models -----------------------------------------------------------------

def _softmax_levels(temperature: float, k: int = K):
    # logits 1/T for the emitted class, 0 elsewhere
    e = np.exp(-1.0 / temperature)
    den = 1.0 + (k - 1) * e
    return 1.0 / den, e / den


def simulate_classifier(labels, cfg: SimulatorConfig, seed: int) -> np.ndarray:
    """(H, W, K) softmax probabilities; off-road pixels get uniform ones."""
    lab = np.asarray(labels)
    road = lab != NO_ROAD
    if np.any(lab[road] >= K):
        raise InvalidInputError("label raster holds unknown class codes")
    n = lab.size
    g = stream(seed, "classifier")
    u = g.random(n).reshape(lab.shape)
    other = g.integers(0, K - 1, size=n).reshape(lab.shape)
    truth = np.where(road, lab, 0).astype(np.int64)
    emitted = np.where(u < cfg.accuracy, truth, (truth + 1 + other) % K)
    hi, lo = _softmax_levels(cfg.temperature)
    probs = np.full(lab.shape + (K,), lo)
    np.put_along_axis(probs, emitted[..., None], hi, axis=-1)
    probs[~road] = 1.0 / K
    return probs


@dataclass(eq=False)
class RegressorOutputs:
    """Baseline head outputs at the ground-truth pixels of one sample."""

    mu: np.ndarray
    s: np.ndarray
    q_low: np.ndarray
    q_high: np.ndarray
    ensemble: np.ndarray   # (M, n)
    dropout: np.ndarray    # (M', n)
    extra: dict = field(default_factory=dict)


def simulate_regressors(sample: GroundTruthSample, gen: ClassGripGenerator,
                        cfg: SimulatorConfig, seed: int) -> RegressorOutputs:
    """Stand-ins for the regression heads, built from the true class moments.

    The reported spread is the true one divided by ``cfg.miscalibration``.
    """
    st = gen.stats[sample.states]
    m, sd, q05, q95 = st.T
    n = m.size
    f = cfg.miscalibration
    mu = m + cfg.noise_sigma * stream(seed, "normal").standard_normal(n)
    s = np.log((sd / f) ** 2)
    q_low = m + (q05 - m) / f
    q_high = m + (q95 - m) / f
    # pixel-major draws so pixel i owns a fixed block of each stream
    ens = m + (sd / f) * stream(seed, "ensemble").standard_normal((n, cfg.ensemble_size)).T
    drop = m + (sd / f) * stream(seed, "dropout").standard_normal((n, cfg.dropout_samples)).T
    return RegressorOutputs(mu, s, q_low, q_high, ens, drop)


def scene_configs(n_scenes: int, height: int, width: int, horizon: int,
                  layout: Sequence, seed: int, shuffle: bool = True) -> list:
    """Per-scene configs with derived seeds; band order optionally permuted."""
    out = []
    layout = tuple(layout)
    for i in range(n_scenes):
        lay = layout
        if shuffle:
            order = stream(derive_seed(seed, "layout", i), "perm").permutation(len(layout))
            lay = tuple(layout[j] for j in order)
        out.append(SceneConfig(height, width, horizon, lay, derive_seed(seed, "scene", i),
                               sample_id=f"scene_{i:05d}"))
    return out
