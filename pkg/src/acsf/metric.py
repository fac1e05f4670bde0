"""Riemannian metrics ``G(z)`` on planar charts and the geodesic-curvature oracle.

Derivative layout (batched over ``N`` points):

* ``G``   has shape ``(N, 2, 2)``,
* ``dG[n, i]``      is ``G_{z_i}``        (shape ``(N, 2, 2, 2)``),
* ``d2G[n, i, j]``  is ``G_{z_i z_j}``    (shape ``(N, 2, 2, 2, 2)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .aniso import MetricInduced, perp
from .errors import DegenerateCurveError, DomainError

__all__ = [
    "MetricField",
    "Conformal",
    "Graph",
    "Cone",
    "TwoMountains",
    "hyperbolic",
    "flat_conformal",
    "flat_graph",
    "metric_eval",
    "induced_anisotropy",
    "Splitting",
    "convex_splitting",
    "splitting_constant",
    "christoffel",
    "geodesic_curvature",
    "geodesic_curvature_pointwise",
    "graph_embed",
    "bump",
]

_EYE = np.eye(2)


def _pts(z) -> np.ndarray:
    return np.atleast_2d(np.asarray(z, dtype=float))


class MetricField:
    """Base class. Subclasses provide ``evaluate``, ``second`` and ``in_domain``."""

    variant = "abstract"

    def evaluate(self, z):
        raise NotImplementedError

    def second(self, z):
        raise NotImplementedError

    def in_domain(self, z) -> np.ndarray:
        return np.ones(_pts(z).shape[0], dtype=bool)

    def check_domain(self, z) -> None:
        ok = self.in_domain(z)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise DomainError(f"point {_pts(z)[bad]} (index {bad}) lies outside the domain of {self!r}", node=bad)

    def to_dict(self) -> dict:
        raise NotImplementedError


class Conformal(MetricField):
    """``G(z) = g(z) Id`` for a positive scalar factor ``g``.

    ``factor(z)`` must return ``(g, grad g, hess g)`` with shapes ``(N,)``,
    ``(N, 2)`` and ``(N, 2, 2)``.
    """

    variant = "conformal"

    def __init__(self, factor: Callable, domain: Callable | None = None, name: str = "conformal", params=None):
        self._factor = factor
        self._domain = domain
        self.name = name
        self.params = dict(params or {})

    def factor(self, z):
        return self._factor(_pts(z))

    def in_domain(self, z):
        z = _pts(z)
        if self._domain is None:
            return np.ones(z.shape[0], dtype=bool)
        return np.asarray(self._domain(z), dtype=bool)

    def evaluate(self, z):
        g, dg, _ = self.factor(z)
        G = g[:, None, None] * _EYE
        dG = dg[:, :, None, None] * _EYE
        return G, dG

    def second(self, z):
        _, _, hg = self.factor(z)
        return hg[:, :, :, None, None] * _EYE

    def to_dict(self):
        return {"variant": self.name, "params": self.params}

    def __repr__(self):
        return f"Conformal({self.name})"


def _hyperbolic_factor(z):
    x = z[:, 0]
    g = x**-2
    dg = np.zeros_like(z)
    dg[:, 0] = -2.0 * x**-3
    hg = np.zeros((z.shape[0], 2, 2))
    hg[:, 0, 0] = 6.0 * x**-4
    return g, dg, hg


def hyperbolic() -> Conformal:
    """Upper half plane model ``g(z) = z_1^{-2}`` on ``z_1 > 0``."""
    return Conformal(_hyperbolic_factor, lambda z: z[:, 0] > 0, name="hyperbolic")


def _flat_factor(z):
    n = z.shape[0]
    return np.ones(n), np.zeros((n, 2)), np.zeros((n, 2, 2))


def flat_conformal() -> Conformal:
    return Conformal(_flat_factor, name="flat_conformal")


class Graph(MetricField):
    """First fundamental form ``G = Id + grad phi (x) grad phi`` of the graph of ``phi``.

    ``height(z)`` must return ``(phi, grad, hess, third)`` with ``third[n, a, i, j]``
    equal to ``phi_{z_a z_i z_j}``.
    """

    variant = "graph"

    def __init__(self, height: Callable, domain: Callable | None = None, name: str = "graph", params=None):
        self._height = height
        self._domain = domain
        self.name = name
        self.params = dict(params or {})

    def height(self, z):
        return self._height(_pts(z))

    def in_domain(self, z):
        z = _pts(z)
        if self._domain is None:
            return np.ones(z.shape[0], dtype=bool)
        return np.asarray(self._domain(z), dtype=bool)

    def evaluate(self, z):
        _, g, H, _ = self.height(z)
        G = _EYE + g[:, :, None] * g[:, None, :]
        # G_{z_i} = h_i g^T + g h_i^T with h_i = column i of the Hessian
        hi = np.transpose(H, (0, 2, 1))  # hi[n, i, :] = d_i grad phi
        dG = hi[:, :, :, None] * g[:, None, None, :] + g[:, None, :, None] * hi[:, :, None, :]
        return G, dG

    def second(self, z):
        _, g, H, T = self.height(z)
        hi = np.transpose(H, (0, 2, 1))
        Tij = np.transpose(T, (0, 2, 3, 1))  # Tij[n, i, j, :] = d_i d_j grad phi
        out = (
            Tij[:, :, :, :, None] * g[:, None, None, None, :]
            + g[:, None, None, :, None] * Tij[:, :, :, None, :]
            + hi[:, :, None, :, None] * hi[:, None, :, None, :]
            + hi[:, None, :, :, None] * hi[:, :, None, None, :]
        )
        return out

    def to_dict(self):
        return {"variant": self.name, "params": self.params}

    def __repr__(self):
        return f"Graph({self.name}, {self.params})"


def _flat_height(z):
    n = z.shape[0]
    return np.zeros(n), np.zeros((n, 2)), np.zeros((n, 2, 2)), np.zeros((n, 2, 2, 2))


def flat_graph() -> Graph:
    return Graph(_flat_height, name="flat")


class Cone(Graph):
    """Right circular cone ``phi(z) = b |z|`` on the punctured plane."""

    apex_radius = 1e-8

    def __init__(self, b: float):
        if b < 0:
            raise ValueError("cone slope must be nonnegative")
        self.b = float(b)
        super().__init__(self._cone_height, self._cone_domain, name="cone", params={"b": self.b})

    def _cone_domain(self, z):
        return np.hypot(z[:, 0], z[:, 1]) > self.apex_radius

    def _cone_height(self, z):
        b = self.b
        r = np.hypot(z[:, 0], z[:, 1])
        n = z / r[:, None]
        grad = b * n
        proj = _EYE - n[:, :, None] * n[:, None, :]
        hess = b * proj / r[:, None, None]
        # d_k (delta_ij / r - z_i z_j / r^3)
        d = _EYE
        third = b * (
            -d[None, :, :, None] * n[:, None, None, :]
            - d[None, :, None, :] * n[:, None, :, None]
            - d[None, None, :, :] * n[:, :, None, None]
            + 3.0 * n[:, :, None, None] * n[:, None, :, None] * n[:, None, None, :]
        ) / (r * r)[:, None, None, None]
        return b * r, grad, hess, third


def bump(s):
    """``psi(s) = exp(-1/(1-s))`` for ``s < 1`` and ``0`` otherwise, with three derivatives."""
    s = np.asarray(s, dtype=float)
    out = [np.zeros_like(s) for _ in range(4)]
    inside = s < 1.0
    if np.any(inside):
        u = 1.0 / (1.0 - s[inside])
        # exp(-u) underflows to 0 long before u**6 overflows; cut explicitly
        safe = u < 700.0
        u = np.where(safe, u, 0.0)
        e = np.where(safe, np.exp(-u), 0.0)
        out[0][inside] = e
        out[1][inside] = -(u**2) * e
        out[2][inside] = (u**4 - 2.0 * u**3) * e
        out[3][inside] = (-(u**6) + 6.0 * u**5 - 6.0 * u**4) * e
    return tuple(out)


class TwoMountains(Graph):
    """``phi(z) = l1 psi(|z|^2) + l2 psi(|z - (2, 0)|^2)`` with the compactly supported bump ``psi``."""

    centers = np.array([[0.0, 0.0], [2.0, 0.0]])

    def __init__(self, lambda1: float, lambda2: float):
        if lambda1 < 0 or lambda2 < 0:
            raise ValueError("mountain heights must be nonnegative")
        self.lambdas = (float(lambda1), float(lambda2))
        super().__init__(
            self._mountains_height,
            name="two_mountains",
            params={"lambda1": self.lambdas[0], "lambda2": self.lambdas[1]},
        )

    def _mountains_height(self, z):
        n = z.shape[0]
        phi = np.zeros(n)
        grad = np.zeros((n, 2))
        hess = np.zeros((n, 2, 2))
        third = np.zeros((n, 2, 2, 2))
        d = _EYE
        for lam, c in zip(self.lambdas, self.centers):
            if lam == 0:
                continue
            w = z - c
            s = np.einsum("ni,ni->n", w, w)
            p0, p1, p2, p3 = bump(s)
            phi += lam * p0
            grad += lam * 2.0 * p1[:, None] * w
            hess += lam * (4.0 * p2[:, None, None] * w[:, :, None] * w[:, None, :] + 2.0 * p1[:, None, None] * d)
            third += lam * (
                8.0 * p3[:, None, None, None] * w[:, :, None, None] * w[:, None, :, None] * w[:, None, None, :]
                + 4.0
                * p2[:, None, None, None]
                * (
                    d[None, :, None, :] * w[:, None, :, None]
                    + d[None, None, :, :] * w[:, :, None, None]
                    + d[None, :, :, None] * w[:, None, None, :]
                )
            )
        return phi, grad, hess, third


def metric_eval(field: MetricField, z):
    """``(G, G_{z_1}, G_{z_2}, det G)`` at the point(s) ``z``."""
    zz = _pts(z)
    field.check_domain(zz)
    G, dG = field.evaluate(zz)
    det = np.linalg.det(G)
    if np.ndim(z) == 1:
        return G[0], dG[0, 0], dG[0, 1], det[0]
    return G, dG[:, 0], dG[:, 1], det


def induced_anisotropy(field: MetricField) -> MetricInduced:
    """Density ``sqrt(G^{-1} p . p)`` with weight ``sqrt(det G)`` measuring Riemannian length."""
    return MetricInduced(field)


@dataclass(frozen=True)
class Splitting:
    """``G = G_+ + G_-`` with ``G_+ = G + c |z|^2 Id`` and ``G_- = -c |z|^2 Id``."""

    field: MetricField
    c: float = 0.0

    def plus(self, z):
        z = _pts(z)
        G, dG = self.field.evaluate(z)
        if self.c:
            G = G + self.c * np.einsum("ni,ni->n", z, z)[:, None, None] * _EYE
            dG = dG + 2.0 * self.c * z[:, :, None, None] * _EYE
        return G, dG

    def minus(self, z):
        z = _pts(z)
        G = -self.c * np.einsum("ni,ni->n", z, z)[:, None, None] * _EYE
        dG = -2.0 * self.c * z[:, :, None, None] * _EYE
        return G, dG

    def plus_second(self, z):
        d2 = self.field.second(z)
        if self.c:
            d2 = d2 + 2.0 * self.c * _EYE[None, :, :, None, None] * _EYE
        return d2

    def minus_second(self, z):
        n = _pts(z).shape[0]
        return np.broadcast_to(-2.0 * self.c * _EYE[None, :, :, None, None] * _EYE, (n, 2, 2, 2, 2))

    def stability_gap(self, w, z) -> np.ndarray:
        """Smallest eigenvalue of ``(w-z)_i (G_{+,z_i}(w) + G_{-,z_i}(z)) - (G(w) - G(z))``."""
        w, z = _pts(w), _pts(z)
        _, dGp = self.plus(w)
        _, dGm = self.minus(z)
        Gw, _ = self.field.evaluate(w)
        Gz, _ = self.field.evaluate(z)
        M = np.einsum("ni,nijk->njk", w - z, dGp + dGm) - (Gw - Gz)
        return np.linalg.eigvalsh(0.5 * (M + np.transpose(M, (0, 2, 1))))[:, 0]


def convex_splitting(field: MetricField, c: float = 0.0) -> Splitting:
    """Convex/concave split of ``G``; ``c = 0`` gives ``G_+ = G`` and ``G_- = 0``."""
    if c < 0:
        raise ValueError("splitting constant must be nonnegative")
    return Splitting(field, float(c))


def splitting_constant(field: MetricField, lower, upper, n: int = 101, n_angles: int = 90) -> float:
    """Smallest ``c >= 0`` with ``lambda_i lambda_j G_{z_i z_j} / 2 + c |lambda|^2 Id >= 0`` on a box.

    The condition is checked on an ``n x n`` grid over ``[lower, upper]``
    (points outside the domain are skipped) and ``n_angles`` unit directions.
    With this constant, ``G_+ = G + c|z|^2 Id`` is convex on the box.
    """
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    z = np.column_stack([g1.ravel(), g2.ravel()])
    z = z[field.in_domain(z)]
    if z.size == 0:
        raise DomainError("the box does not meet the domain of the metric")
    d2 = field.second(z)
    theta = np.pi * np.arange(n_angles) / n_angles
    lam = np.column_stack([np.cos(theta), np.sin(theta)])
    Q = 0.5 * np.einsum("ti,tj,nijab->tnab", lam, lam, d2)
    return float(max(0.0, -np.linalg.eigvalsh(Q)[..., 0].min()))


def christoffel(field: MetricField, z) -> np.ndarray:
    """``Gamma[n, k, i, j] = Gamma^k_{ij}`` from analytic metric derivatives."""
    zz = _pts(z)
    G, dG = field.evaluate(zz)
    Ginv = np.linalg.inv(G)
    # d_j g_{li} + d_i g_{lj} - d_l g_{ij}
    t = (
        np.transpose(dG, (0, 2, 3, 1))  # [n, l, i, j] <- d_j g_{li}
        + np.transpose(dG, (0, 2, 1, 3))  # [n, l, i, j] <- d_i g_{lj}
        - dG  # [n, l, i, j] <- d_l g_{ij}
    )
    out = 0.5 * np.einsum("nkl,nlij->nkij", Ginv, t)
    return out[0] if np.ndim(z) == 1 else out


def geodesic_curvature_pointwise(field: MetricField, z, xr, xrr) -> np.ndarray:
    """Geodesic curvature of the image curve from chart derivatives ``x_rho``, ``x_rhorho``."""
    z = _pts(z)
    xr, xrr = _pts(xr), _pts(xrr)
    field.check_domain(z)
    speed = np.hypot(xr[:, 0], xr[:, 1])
    if np.any(speed == 0):
        raise DegenerateCurveError("zero tangent", element=int(np.argmin(speed)))
    tau = xr / speed[:, None]
    nu = perp(tau)
    kappa = np.einsum("ni,ni->n", xrr, nu) / speed**2
    G, _ = field.evaluate(z)
    Gam = christoffel(field, z)
    corr = np.einsum("nkij,ni,nj,nk->n", Gam, tau, tau, nu)
    gam = np.sqrt(np.einsum("ni,nij,nj->n", nu, np.linalg.inv(G), nu))
    return (kappa + corr) / (gam * np.einsum("ni,nij,nj->n", tau, G, tau))


def geodesic_curvature(field: MetricField, curve) -> np.ndarray:
    """Per-node geodesic curvature of a discrete curve (central differences)."""
    from .aniso import nodal_frame
    from .geom import DiscreteCurve

    X = curve.positions if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)
    lengths = np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)
    if np.any(lengths == 0):
        raise DegenerateCurveError("degenerate element", element=int(np.argmin(lengths)))
    xr, xrr = nodal_frame(X)
    return geodesic_curvature_pointwise(field, X, xr, xrr)


def graph_embed(field: MetricField, curve) -> np.ndarray:
    """Lift chart points to ``(z1, z2, phi(z))`` for graph type metrics."""
    from .geom import DiscreteCurve

    if not isinstance(field, Graph):
        raise TypeError(f"{field!r} is not a graph metric")
    X = curve.positions if isinstance(curve, DiscreteCurve) else _pts(curve)
    field.check_domain(X)
    phi = field.height(X)[0]
    return np.column_stack([X, phi])
