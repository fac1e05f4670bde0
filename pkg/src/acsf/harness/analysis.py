"""Discrete energy and experimental orders of convergence."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..aniso import Anisotropy, perp
from ..geom import DiscreteCurve, element_derivative

__all__ = ["discrete_energy", "eoc"]


def discrete_energy(model: Anisotropy, curve) -> float:
    """``E^h(x) = (gamma(x, perp x_rho), a(x))^h``.

    For a metric-induced model this is the discrete Riemannian length.
    """
    X = curve.positions if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)
    J = X.shape[0]
    q = perp(element_derivative(X))
    if model.space_independent:
        return float(np.sum(model.gamma(None, q))) / J
    model.check_domain(X)
    Xl = np.roll(X, 1, axis=0)
    a, _ = model.weight(X)
    al, _ = model.weight(Xl)
    right = model.gamma(X, q) * a
    left = model.gamma(Xl, q) * al
    return 0.5 / J * float(np.sum(right + left))


def eoc(errors: Sequence[float], levels: Sequence[int]) -> list[float]:
    """``log(e_{k-1}/e_k) / log(J_k/J_{k-1})`` between consecutive levels."""
    e = np.asarray(errors, dtype=float)
    J = np.asarray(levels, dtype=float)
    if e.shape != J.shape or e.ndim != 1:
        raise ValueError("errors and levels must be 1d sequences of equal length")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive")
    if np.any(np.diff(J) <= 0):
        raise ValueError("levels must be strictly increasing")
    return [float(v) for v in np.log(e[:-1] / e[1:]) / np.log(J[1:] / J[:-1])]
