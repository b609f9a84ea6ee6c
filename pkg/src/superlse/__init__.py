"""Line spectral estimation by sparse Bayesian inference with structured
(Toeplitz / Woodbury) covariance algebra.

Public entry points:

* :func:`superlse.estimator.estimate` / :func:`estimate_mmv` -- fit the model.
* :mod:`superlse.simdata` -- synthetic signals and evaluation metrics.
* ``superlse`` CLI -- estimate / generate / benchmark subcommands.
"""

from .errors import (
    DimensionMismatch,
    InfeasibleSeparation,
    InvalidPattern,
    LineSearchFailed,
    NoActiveComponents,
    NotPositiveDefinite,
    SuperLseError,
)

__all__ = [
    "DimensionMismatch",
    "EstimatorOptions",
    "InfeasibleSeparation",
    "InvalidPattern",
    "LineSearchFailed",
    "LseResult",
    "NoActiveComponents",
    "NotPositiveDefinite",
    "Observation",
    "SuperLseError",
    "estimate",
    "estimate_mmv",
]


def __getattr__(name):
    if name in ("EstimatorOptions", "LseResult", "estimate", "estimate_mmv"):
        from . import estimator

        return getattr(estimator, name)
    if name == "Observation":
        from .model_core import Observation

        return Observation
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
