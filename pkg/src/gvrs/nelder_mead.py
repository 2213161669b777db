"""Derivative-free Nelder-Mead simplex minimization.

Classical reflection / expansion / contraction / shrink moves with the
fminsearch-style initial simplex and stopping rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class SimplexOptions:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    xtol: float = 1e-8
    ftol: float = 1e-10
    max_evals: Optional[int] = None  # None -> 200 * dimension
    step_fraction: float = 0.05
    zero_step: float = 1e-4
    restarts: int = 2

    def __post_init__(self):
        if min(self.reflection, self.expansion, self.contraction, self.shrink) <= 0:
            raise InvalidInputError("simplex coefficients must be positive")
        if self.expansion <= self.reflection:
            raise InvalidInputError("expansion must exceed reflection")
        if not (0 < self.contraction < 1 and 0 < self.shrink < 1):
            raise InvalidInputError("contraction and shrink must lie in (0, 1)")
        if self.restarts < 0:
            raise InvalidInputError("restarts must be non-negative")
        if self.max_evals is not None and self.max_evals < 1:
            raise InvalidInputError("max_evals must be positive")

    def budget(self, dim: int) -> int:
        return self.max_evals if self.max_evals is not None else 200 * dim


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    nfev: int
    converged: bool
    nit: int = 0


def initial_simplex(x0: np.ndarray, opts: SimplexOptions) -> np.ndarray:
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        step = opts.step_fraction * abs(x0[i]) if x0[i] != 0 else opts.zero_step
        simplex[i + 1, i] = x0[i] + step
    return simplex


def minimize(
    fun: Callable[[np.ndarray], float],
    x0,
    options: SimplexOptions | None = None,
    callback: Callable[[np.ndarray, float], None] | None = None,
) -> MinimizeResult:
    """Minimize ``fun`` starting from ``x0``.

    Converges when the simplex diameter (max-norm distance of every vertex
    from the best one) is at most ``xtol`` and the spread of vertex values is
    at most ``ftol``.  A converged simplex is rebuilt around its best vertex
    up to ``restarts`` times; the run stops once a restart no longer improves
    the best value by more than ``ftol``.  The evaluation budget is checked
    once per iteration, so the final count can overshoot ``max_evals`` by at
    most ``dim + 1``.

    ``callback(best_x, best_f)`` is called after every iteration.
    """
    opts = options or SimplexOptions()
    x0 = np.array(x0, dtype=float).ravel()
    n = x0.size
    if n == 0:
        raise InvalidInputError("x0 must have at least one component")
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 must be finite")
    budget = opts.budget(n)

    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        v = float(fun(x))
        return v if v == v else np.inf  # NaN counts as worst

    rho, chi, gam, sig = opts.reflection, opts.expansion, opts.contraction, opts.shrink
    sim = initial_simplex(x0, opts)
    fsim = np.array([f(v) for v in sim])
    idx = np.arange(n + 1)

    converged = False
    nit = 0
    restarts_left = opts.restarts
    last_best = np.inf
    while True:
        # ascending by value; among equal values the lowest index sorts last,
        # so it is the one picked as worst
        order = np.lexsort((-idx, fsim))
        sim, fsim = sim[order], fsim[order]

        if (np.max(np.abs(sim[1:] - sim[0])) <= opts.xtol
                and np.max(np.abs(fsim[1:] - fsim[0])) <= opts.ftol):
            if restarts_left == 0 or fsim[0] >= last_best - opts.ftol or nfev >= budget:
                converged = True
                break
            restarts_left -= 1
            last_best = fsim[0]
            sim = initial_simplex(sim[0].copy(), opts)
            fsim = np.concatenate(([last_best], [f(v) for v in sim[1:]]))
            continue
        if nfev >= budget:
            break
        nit += 1

        xbar = sim[:-1].mean(axis=0)
        xw, fw = sim[-1], fsim[-1]
        xr = xbar + rho * (xbar - xw)
        fr = f(xr)

        if fr < fsim[0]:
            xe = xbar + rho * chi * (xbar - xw)
            fe = f(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            shrink = False
            if fr < fw:
                xc = xbar + gam * (xr - xbar)
                fc = f(xc)
                if fc <= fr:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    shrink = True
            else:
                xcc = xbar + gam * (xw - xbar)
                fcc = f(xcc)
                if fcc < fw:
                    sim[-1], fsim[-1] = xcc, fcc
                else:
                    shrink = True
            if shrink:
                for j in range(1, n + 1):
                    sim[j] = sim[0] + sig * (sim[j] - sim[0])
                    fsim[j] = f(sim[j])

        if callback is not None:
            b = int(np.argmin(fsim))
            callback(sim[b].copy(), float(fsim[b]))

    b = int(np.argmin(fsim))
    return MinimizeResult(x=sim[b].copy(), fun=float(fsim[b]), nfev=nfev,
                          converged=converged, nit=nit)
