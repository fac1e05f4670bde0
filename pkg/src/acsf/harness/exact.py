"""Closed form solutions used as references in convergence studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..geom import DiscreteCurve, interpolate

__all__ = ["ExactSolution", "WulffEllipse", "ConeCircle", "HyperbolicCircle"]

_W = 2.0 * np.pi


def _circle(rho):
    rho = np.asarray(rho, dtype=float)
    return np.cos(_W * rho), np.sin(_W * rho)


class ExactSolution:
    """Parameterisation ``x(rho, t)`` with its ``rho`` and ``t`` derivatives."""

    extinction_time: float = np.inf

    def _check(self, t):
        if not t < self.extinction_time:
            raise DomainError(f"t = {t} is not before the extinction time {self.extinction_time}")

    def position(self, rho, t) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, rho, t) -> np.ndarray:
        raise NotImplementedError

    def velocity(self, rho, t) -> np.ndarray:
        raise NotImplementedError

    def curve(self, J: int, t: float = 0.0) -> DiscreteCurve:
        """Nodal interpolant at time ``t``."""
        return interpolate(lambda r: self.position(r, t), J, time=t)

    def at(self, t: float):
        """``(position, derivative)`` callables of ``rho`` at a fixed time."""
        return (lambda r: self.position(r, t)), (lambda r: self.derivative(r, t))


@dataclass(frozen=True)
class WulffEllipse(ExactSolution):
    """``sqrt(1-2t) (cos 2 pi rho, delta sin 2 pi rho)`` for the elliptic density."""

    delta: float = 0.5
    extinction_time: float = 0.5

    def _s(self, t):
        self._check(t)
        return np.sqrt(1.0 - 2.0 * t)

    def position(self, rho, t):
        c, s = _circle(rho)
        return self._s(t) * np.stack([c, self.delta * s], axis=-1)

    def derivative(self, rho, t):
        c, s = _circle(rho)
        return self._s(t) * _W * np.stack([-s, self.delta * c], axis=-1)

    def velocity(self, rho, t):
        c, s = _circle(rho)
        return -np.stack([c, self.delta * s], axis=-1) / self._s(t)


@dataclass(frozen=True)
class ConeCircle(ExactSolution):
    """Concentric circles ``r(t)^2 = r0^2 - 2t/(1+b^2)`` on the cone ``phi = b|z|``."""

    b: float = float(np.sqrt(3.0))
    r0: float = 1.0

    @property
    def extinction_time(self) -> float:
        return 0.5 * self.r0**2 * (1.0 + self.b**2)

    def radius(self, t):
        self._check(t)
        return np.sqrt(self.r0**2 - 2.0 * t / (1.0 + self.b**2))

    def position(self, rho, t):
        c, s = _circle(rho)
        return self.radius(t) * np.stack([c, s], axis=-1)

    def derivative(self, rho, t):
        c, s = _circle(rho)
        return self.radius(t) * _W * np.stack([-s, c], axis=-1)

    def velocity(self, rho, t):
        c, s = _circle(rho)
        r = self.radius(t)
        return -np.stack([c, s], axis=-1) / ((1.0 + self.b**2) * r)


@dataclass(frozen=True)
class HyperbolicCircle(ExactSolution):
    """Translating, shrinking circles in the half plane model ``g = z_1^{-2}``.

    Centre ``(a0 e^{-t}, 0)`` and radius ``sqrt(r0^2 - a0^2 (1 - e^{-2t}))``.
    """

    a0: float = 2.0
    r0: float = 1.0

    def __post_init__(self):
        if not self.a0 > self.r0 > 0:
            raise ValueError("need a0 > r0 > 0")

    @property
    def extinction_time(self) -> float:
        return -0.5 * np.log(1.0 - (self.r0 / self.a0) ** 2)

    def center(self, t):
        return np.array([self.a0 * np.exp(-t), 0.0])

    def radius(self, t):
        self._check(t)
        return np.sqrt(self.r0**2 - self.a0**2 * (1.0 - np.exp(-2.0 * t)))

    def position(self, rho, t):
        c, s = _circle(rho)
        return self.center(t) + self.radius(t) * np.stack([c, s], axis=-1)

    def derivative(self, rho, t):
        c, s = _circle(rho)
        return self.radius(t) * _W * np.stack([-s, c], axis=-1)

    def velocity(self, rho, t):
        c, s = _circle(rho)
        r = self.radius(t)
        dr = -(self.a0**2) * np.exp(-2.0 * t) / r
        return np.array([-self.a0 * np.exp(-t), 0.0]) + dr * np.stack([c, s], axis=-1)

    def node_deviation(self, curve) -> float:
        """``max_j | |X_j - centre(t)| - r(t) |`` at the curve's time."""
        X = curve.positions
        return float(np.max(np.abs(np.linalg.norm(X - self.center(curve.time), axis=1) - self.radius(curve.time))))
