"""Parametric finite elements for anisotropic and geodesic curve shortening flow."""

from .errors import (
    AcsfError,
    DegenerateCurveError,
    DomainError,
    NewtonConvergenceError,
    SingularSystemError,
    StepError,
)
from .geom import DiscreteCurve, PeriodicMesh

__version__ = "0.1.0"

__all__ = [
    "AcsfError",
    "DegenerateCurveError",
    "DomainError",
    "NewtonConvergenceError",
    "SingularSystemError",
    "StepError",
    "DiscreteCurve",
    "PeriodicMesh",
    "__version__",
]
