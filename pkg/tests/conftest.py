from __future__ import annotations

import numpy as np
import pytest

from gvrs import pl_density as pld
from gvrs.mixture import SurfaceState, build_mixture_table
from gvrs.synth import default_class_densities

# filled by test_acceptance; echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gen():
    return default_class_densities()


@pytest.fixture(scope="session")
def table(gen):
    return gen.table


def random_density(rng, name="d", n=None, lo=0.0, hi=1.0, zero_ends=False):
    """A valid density with random knots inside [lo, hi]."""
    n = n or int(rng.integers(2, 25))
    knots = np.sort(rng.uniform(lo, hi, n + 1))
    while np.any(np.diff(knots) <= 1e-6):
        knots = np.sort(rng.uniform(lo, hi, n + 1))
    dens = rng.uniform(0, 3, n + 1)
    # some zero stretches exercise the plateau convention
    dens[rng.random(n + 1) < 0.2] = 0.0
    if zero_ends:
        dens[0] = dens[-1] = 0.0
    if dens.sum() == 0 or pld.trapezoid_mass(knots, dens) <= 0:
        dens[n // 2] = 1.0
    return pld.build(name, knots, dens, auto_normalize=True)


def random_class_set(rng):
    return [random_density(rng, s.label, lo=rng.uniform(0, 0.5), hi=rng.uniform(0.5, 1.0))
            for s in SurfaceState]


def random_table(rng):
    return build_mixture_table(random_class_set(rng))
