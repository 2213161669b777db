"""Grip probability distributions from road surface state probabilities.

Per-class piecewise-linear grip densities are mixed with per-pixel class
probabilities; the package also carries the baseline uncertainty heads, the
calibration metrics and a synthetic benchmark.
"""

__version__ = "0.1.0"

from .errors import InvalidInputError, NumericalFailure  # noqa: E402
from .mixture import SurfaceState  # noqa: E402

__all__ = ["InvalidInputError", "NumericalFailure", "SurfaceState", "__version__"]
