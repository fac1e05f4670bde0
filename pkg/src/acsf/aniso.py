"""Anisotropic densities ``gamma(z, p)``, weights ``a(z)`` and derived quantities.

All evaluators are vectorised: ``z`` and ``p`` have shape ``(N, 2)`` (a single
point of shape ``(2,)`` is accepted and the result is squeezed accordingly).
Matrices are returned with shape ``(N, 2, 2)``.

``perp`` is the anticlockwise rotation ``p -> (-p2, p1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateCurveError, DomainError

__all__ = [
    "DensityJet",
    "PhiJet",
    "Anisotropy",
    "Isotropic",
    "SmoothKFold",
    "BGN",
    "MetricInduced",
    "elliptic",
    "regularized_polygon",
    "perp",
    "density_jet",
    "phi_jet",
    "h_matrix",
    "b_matrix",
    "dual",
    "sample_wulff",
    "sample_frank",
    "assert_convex",
    "ConvexityCheck",
    "anisotropic_curvature",
    "anisotropic_curvature_pointwise",
    "nodal_frame",
]

# p_perp = ROT @ p ; the adjoint rotation satisfies ROT.T @ v = -perp(v)
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def perp(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.stack([-p[..., 1], p[..., 0]], axis=-1)


def _batch(z, p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if z is None:
        z = np.zeros_like(p)
    else:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[0] == 1 and p.shape[0] > 1:
            z = np.broadcast_to(z, p.shape)
    return z, p, single


def _require_nonzero(p):
    norms = np.hypot(p[:, 0], p[:, 1])
    if np.any(norms == 0):
        raise DomainError("anisotropy derivatives are undefined at p = 0")
    return norms


@dataclass(frozen=True)
class DensityJet:
    """``gamma`` and its derivatives at a batch of points.

    ``mixed[n, i, j]`` holds ``gamma_{p_i z_j}``.
    """

    value: np.ndarray
    grad_p: np.ndarray
    hess_p: np.ndarray
    grad_z: np.ndarray
    mixed: np.ndarray

    def squeeze(self) -> "DensityJet":
        return DensityJet(*(np.asarray(a)[0] for a in (self.value, self.grad_p, self.hess_p, self.grad_z, self.mixed)))


@dataclass(frozen=True)
class PhiJet:
    """``Phi(z, p) = a(z)^2 gamma(z, perp p)^2 / 2`` and its derivatives."""

    value: np.ndarray
    grad_p: np.ndarray
    grad_z: np.ndarray
    hess_p: np.ndarray

    def squeeze(self) -> "PhiJet":
        return PhiJet(*(np.asarray(a)[0] for a in (self.value, self.grad_p, self.grad_z, self.hess_p)))


class Anisotropy:
    """Base class: subclasses implement :meth:`gamma`, :meth:`jet` and :meth:`weight`."""

    space_independent = True
    variant = "abstract"

    def gamma(self, z, p) -> np.ndarray:
        raise NotImplementedError

    def jet(self, z, p) -> DensityJet:
        raise NotImplementedError

    def weight(self, z):
        """Return ``(a(z), grad a(z))`` with shapes ``(N,)`` and ``(N, 2)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.ones(z.shape[0]), np.zeros_like(z)

    def check_domain(self, z) -> None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


class Isotropic(Anisotropy):
    variant = "isotropic"

    def gamma(self, z, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.hypot(p[:, 0], p[:, 1])

    def jet(self, z, p):
        z, p, _ = _batch(z, p)
        r = _require_nonzero(p)
        e = p / r[:, None]
        hess = (np.eye(2)[None] - e[:, :, None] * e[:, None, :]) / r[:, None, None]
        zeros2 = np.zeros_like(p)
        return DensityJet(r, e, hess, zeros2, np.zeros((len(r), 2, 2)))

    def to_dict(self):
        return {"variant": "isotropic", "params": {}}

    def __repr__(self):
        return "Isotropic()"


class SmoothKFold(Anisotropy):
    """``gamma(p) = |p| (1 + delta cos(k theta))`` with ``theta`` the polar angle of ``p``."""

    variant = "kfold"

    def __init__(self, k: int, delta: float):
        if int(k) != k or k < 1:
            raise ValueError("k must be a positive integer")
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        self.k = int(k)
        self.delta = float(delta)

    def _g(self, theta):
        k, d = self.k, self.delta
        return 1.0 + d * np.cos(k * theta), -d * k * np.sin(k * theta), -d * k * k * np.cos(k * theta)

    def gamma(self, z, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        theta = np.arctan2(p[:, 1], p[:, 0])
        return r * (1.0 + self.delta * np.cos(self.k * theta))

    def jet(self, z, p):
        z, p, _ = _batch(z, p)
        r = _require_nonzero(p)
        theta = np.arctan2(p[:, 1], p[:, 0])
        g, dg, d2g = self._g(theta)
        er = p / r[:, None]
        et = perp(er)
        grad = g[:, None] * er + dg[:, None] * et
        hess = ((g + d2g) / r)[:, None, None] * et[:, :, None] * et[:, None, :]
        return DensityJet(r * g, grad, hess, np.zeros_like(p), np.zeros((len(r), 2, 2)))

    def convexity_threshold(self) -> float:
        return np.inf if self.k == 1 else 1.0 / (self.k**2 - 1)

    def to_dict(self):
        return {"variant": "kfold", "params": {"k": self.k, "delta": self.delta}}

    def __repr__(self):
        return f"SmoothKFold(k={self.k}, delta={self.delta})"


class BGN(Anisotropy):
    """Sum of elliptic norms ``gamma(p) = sum_l sqrt(Lambda_l p . p)``."""

    variant = "bgn"

    def __init__(self, matrices: Sequence):
        mats = np.array(matrices, dtype=float).reshape(-1, 2, 2)
        if not np.allclose(mats, np.transpose(mats, (0, 2, 1))):
            raise ValueError("BGN matrices must be symmetric")
        eig = np.linalg.eigvalsh(mats)
        if np.any(eig <= 0):
            raise ValueError("BGN matrices must be positive definite")
        self.matrices = mats
        det = np.linalg.det(mats)
        # Lambda~ = det(Lambda) Lambda^{-1}, so that gamma(perp p) = sum sqrt(Lambda~ p . p)
        self.tilde = det[:, None, None] * np.linalg.inv(mats)
        self._min_eig = eig.min(axis=1)

    @property
    def L(self) -> int:
        return self.matrices.shape[0]

    def gamma(self, z, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.sqrt(np.einsum("ni,lij,nj->nl", p, self.matrices, p)).sum(axis=1)

    def jet(self, z, p):
        z, p, _ = _batch(z, p)
        r = _require_nonzero(p)
        Lp = np.einsum("lij,nj->nli", self.matrices, p)
        # lower bound sqrt(Lambda p . p) >= |p| sqrt(lambda_min)
        s = np.maximum(np.sqrt(np.einsum("nli,ni->nl", Lp, p)), r[:, None] * np.sqrt(self._min_eig)[None])
        value = s.sum(axis=1)
        grad = (Lp / s[:, :, None]).sum(axis=1)
        hess = (self.matrices[None] / s[:, :, None, None]).sum(axis=1) - np.einsum(
            "nli,nlj->nij", Lp / s[:, :, None] ** 1.5, Lp / s[:, :, None] ** 1.5
        )
        return DensityJet(value, grad, hess, np.zeros_like(p), np.zeros((len(r), 2, 2)))

    def to_dict(self):
        return {"variant": "bgn", "params": {"matrices": self.matrices.tolist()}}

    def __repr__(self):
        return f"BGN(L={self.L})"


def elliptic(delta: float = 0.5) -> BGN:
    """``gamma(p) = sqrt(p1^2 + delta^2 p2^2)``, whose Wulff shape is an ellipse."""
    return BGN([np.diag([1.0, delta**2])])


def regularized_polygon(L: int, delta: float) -> BGN:
    """``L`` rotated elliptic norms giving a smoothed regular ``2L``-gon Wulff shape."""
    if L < 1:
        raise ValueError("L must be positive")
    th = np.pi / L
    Q = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
    D = np.diag([1.0, delta**2])
    mats = []
    for ell in range(1, L + 1):
        Ql = np.linalg.matrix_power(Q, ell)
        mats.append(Ql.T @ D @ Ql)
    return BGN(mats)


class MetricInduced(Anisotropy):
    """``gamma(z, p) = sqrt(G^{-1}(z) p . p)`` and ``a(z) = sqrt(det G(z))`` for a metric field."""

    space_independent = False
    variant = "metric"

    def __init__(self, metric):
        self.metric = metric

    def check_domain(self, z):
        self.metric.check_domain(z)

    def _inverse(self, z):
        G, dG = self.metric.evaluate(z)
        Ginv = np.linalg.inv(G)
        # (G^{-1})_{z_j} = -G^{-1} G_{z_j} G^{-1}
        dGinv = -np.einsum("nab,njbc,ncd->njad", Ginv, dG, Ginv)
        return G, dG, Ginv, dGinv

    def gamma(self, z, p):
        z, p, _ = _batch(z, p)
        G, _ = self.metric.evaluate(z)
        Ginv = np.linalg.inv(G)
        return np.sqrt(np.einsum("ni,nij,nj->n", p, Ginv, p))

    def jet(self, z, p):
        z, p, _ = _batch(z, p)
        _require_nonzero(p)
        G, dG, Ginv, dGinv = self._inverse(z)
        Gp = np.einsum("nij,nj->ni", Ginv, p)
        gam = np.sqrt(np.einsum("ni,ni->n", Gp, p))
        grad = Gp / gam[:, None]
        hess = Ginv / gam[:, None, None] - Gp[:, :, None] * Gp[:, None, :] / gam[:, None, None] ** 3
        dGp = np.einsum("njab,nb->nja", dGinv, p)  # [(G^{-1})_{z_j} p]_a
        dGpp = np.einsum("nja,na->nj", dGp, p)
        grad_z = 0.5 * dGpp / gam[:, None]
        mixed = np.transpose(dGp, (0, 2, 1)) / gam[:, None, None] - 0.5 * (
            Gp[:, :, None] * dGpp[:, None, :]
        ) / gam[:, None, None] ** 3
        return DensityJet(gam, grad, hess, grad_z, mixed)

    def weight(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        G, dG = self.metric.evaluate(z)
        a = np.sqrt(np.linalg.det(G))
        Ginv = np.linalg.inv(G)
        grad = 0.5 * np.einsum("nab,njba->nj", Ginv, dG) * a[:, None]
        return a, grad

    def to_dict(self):
        return {"variant": "metric", "params": {"metric": self.metric.to_dict()}}

    def __repr__(self):
        return f"MetricInduced({self.metric!r})"


def density_jet(model: Anisotropy, z, p) -> DensityJet:
    """All first and second derivatives of ``gamma`` needed by the schemes."""
    p_arr = np.asarray(p, dtype=float)
    if z is not None:
        model.check_domain(np.atleast_2d(z))
    jet = model.jet(z, p)
    return jet.squeeze() if p_arr.ndim == 1 else jet


def phi_jet(model: Anisotropy, z, p) -> PhiJet:
    """``Phi`` with ``Phi_p``, ``Phi_z`` and ``Phi_pp``; ``Phi_pp`` is NaN where ``p = 0``."""
    z, p, single = _batch(z, p)
    n = p.shape[0]
    value = np.zeros(n)
    grad_p = np.zeros((n, 2))
    grad_z = np.zeros((n, 2))
    hess = np.full((n, 2, 2), np.nan)
    nz = np.hypot(p[:, 0], p[:, 1]) > 0
    if np.any(nz):
        zz, pp = z[nz], p[nz]
        model.check_domain(zz)
        q = perp(pp)
        jet = model.jet(zz, q)
        a, grad_a = model.weight(zz)
        a2 = a * a
        g = jet.value
        value[nz] = 0.5 * a2 * g * g
        grad_p[nz] = -(a2 * g)[:, None] * perp(jet.grad_p)
        grad_z[nz] = (a2 * g)[:, None] * jet.grad_z + (a * g * g)[:, None] * grad_a
        inner = jet.grad_p[:, :, None] * jet.grad_p[:, None, :] + g[:, None, None] * jet.hess_p
        hess[nz] = a2[:, None, None] * np.einsum("ki,nkl,lj->nij", ROT, inner, ROT)
    out = PhiJet(value, grad_p, grad_z, hess)
    return out.squeeze() if single else out


def h_matrix(model: Anisotropy, z, p) -> np.ndarray:
    """DeTurck mass matrix ``H(z, p)``; a rotation-scaling matrix, positive definite."""
    z, p, single = _batch(z, p)
    _require_nonzero(p)
    model.check_domain(z)
    q = perp(p)
    jet = model.jet(z, q)
    a, _ = model.weight(z)
    g = jet.value
    gp_p = np.einsum("ni,ni->n", jet.grad_p, p)
    scale = a * a * g / np.einsum("ni,ni->n", jet.grad_p, jet.grad_p)
    H = np.empty((p.shape[0], 2, 2))
    H[:, 0, 0] = H[:, 1, 1] = scale * g
    H[:, 0, 1] = scale * gp_p
    H[:, 1, 0] = -scale * gp_p
    return H[0] if single else H


def b_matrix(model: BGN, p) -> np.ndarray:
    """Matrix ``B(p)`` with ``B(p) p = Phi_0'(p)``; ``B(0) = L sum Lambda~``."""
    if not isinstance(model, BGN):
        raise TypeError("b_matrix requires a BGN anisotropy")
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    T = model.tilde
    s = np.sqrt(np.einsum("ni,lij,nj->nl", p, T, p))
    B = np.empty((p.shape[0], 2, 2))
    zero = np.all(s == 0, axis=1)
    nz = ~zero
    if np.any(nz):
        sn = s[nz]
        B[nz] = sn.sum(axis=1)[:, None, None] * np.einsum("nl,lij->nij", 1.0 / sn, T)
    if np.any(zero):
        B[zero] = model.L * T.sum(axis=0)
    return B[0] if single else B


def _golden_max(f, lo, hi, iters=80):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - invphi * (b - a)
        d_new = a + invphi * (b - a)
        c, d = c_new, d_new
        fc, fd = f(c), f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def dual(model: Anisotropy, q, n_angles: int = 3600) -> np.ndarray:
    """``gamma_0^*(q) = max_{|p|=1} p . q / gamma_0(p)`` by grid search plus golden section."""
    if not model.space_independent:
        raise ValueError("the dual is only defined for space independent densities")
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    P = np.column_stack([np.cos(theta), np.sin(theta)])
    g = model.gamma(None, P)
    vals = (q @ P.T) / g[None, :]
    best = np.argmax(vals, axis=1)
    dth = 2.0 * np.pi / n_angles
    qi = q

    def f(t):
        pts = np.column_stack([np.cos(t), np.sin(t)])
        return np.einsum("ni,ni->n", pts, qi) / model.gamma(None, pts)

    _, fmax = _golden_max(f, theta[best] - dth, theta[best] + dth)
    out = np.maximum(fmax, vals[np.arange(len(q)), best])
    return out[0] if single else out


def sample_wulff(model: Anisotropy, n: int = 720) -> np.ndarray:
    """``n`` points on the Wulff boundary ``{gamma_0^* = 1}``, ordered anticlockwise."""
    theta = 2.0 * np.pi * np.arange(n) / n
    U = np.column_stack([np.cos(theta), np.sin(theta)])
    return U / dual(model, U)[:, None]


def sample_frank(model: Anisotropy, n: int = 720) -> np.ndarray:
    """``n`` points on the Frank diagram boundary ``{gamma_0 = 1}``."""
    theta = 2.0 * np.pi * np.arange(n) / n
    U = np.column_stack([np.cos(theta), np.sin(theta)])
    return U / model.gamma(None, U)[:, None]


@dataclass(frozen=True)
class ConvexityCheck:
    convex: bool
    witness: np.ndarray | None = None
    min_curvature: float = np.nan

    def __bool__(self):
        return bool(self.convex)


def assert_convex(model: Anisotropy, n_angles: int = 720, z_samples=None) -> ConvexityCheck:
    """Check ``gamma_pp(z, p) q . q > 0`` for unit ``p`` and ``q = perp p``.

    The k-fold family is decided by its closed form threshold
    ``delta < 1/(k^2 - 1)``; other variants are sampled on ``n_angles``
    directions (at each point of ``z_samples`` for space dependent ones).
    """
    if isinstance(model, SmoothKFold):
        ok = model.delta < model.convexity_threshold()
        witness = None
        if not ok:
            # g + g'' = 1 + delta (1 - k^2) cos(k theta) is smallest at theta = 0
            witness = np.array([1.0, 0.0])
        return ConvexityCheck(ok, witness, 1.0 + model.delta * (1 - model.k**2))
    n_angles = max(int(n_angles), 720)
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    P = np.column_stack([np.cos(theta), np.sin(theta)])
    Q = perp(P)
    if z_samples is None:
        z_samples = np.zeros((1, 2)) if model.space_independent else None
        if z_samples is None:
            raise ValueError("z_samples are required for a space dependent density")
    worst, witness = np.inf, None
    for z in np.atleast_2d(z_samples):
        jet = model.jet(np.broadcast_to(z, P.shape), P)
        c = np.einsum("ni,nij,nj->n", Q, jet.hess_p, Q)
        i = int(np.argmin(c))
        if c[i] < worst:
            worst, witness = float(c[i]), P[i]
    ok = worst > 0
    return ConvexityCheck(ok, None if ok else witness, worst)


def nodal_frame(X: np.ndarray):
    """Central difference ``x_rho`` and ``x_rhorho`` at the nodes of a uniform periodic curve."""
    X = np.asarray(X, dtype=float)
    J = X.shape[0]
    Xp, Xm = np.roll(X, -1, axis=0), np.roll(X, 1, axis=0)
    xr = 0.5 * J * (Xp - Xm)
    xrr = J * J * (Xp - 2.0 * X + Xm)
    return xr, xrr


def anisotropic_curvature_pointwise(model: Anisotropy, z, xr, xrr) -> np.ndarray:
    """``kappa_gamma`` from position, first and second parameter derivatives."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    xr = np.atleast_2d(np.asarray(xr, dtype=float))
    xrr = np.atleast_2d(np.asarray(xrr, dtype=float))
    speed = np.hypot(xr[:, 0], xr[:, 1])
    if np.any(speed == 0):
        raise DegenerateCurveError("zero tangent in curvature evaluation", element=int(np.argmin(speed)))
    tau = xr / speed[:, None]
    nu = perp(tau)
    kappa = np.einsum("ni,ni->n", xrr, nu) / speed**2
    model.check_domain(z)
    jet = model.jet(z, nu)
    a, grad_a = model.weight(z)
    div_term = np.trace(jet.mixed, axis1=1, axis2=2)
    return (
        kappa * np.einsum("ni,nij,nj->n", tau, jet.hess_p, tau)
        - div_term
        - np.einsum("ni,ni->n", grad_a, jet.grad_p) / a
    )


def anisotropic_curvature(model: Anisotropy, curve) -> np.ndarray:
    """Per-node anisotropic curvature of a discrete curve (central differences)."""
    from .geom import DiscreteCurve

    X = curve.positions if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)
    lengths = np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)
    if np.any(lengths == 0):
        raise DegenerateCurveError("degenerate element", element=int(np.argmin(lengths)))
    xr, xrr = nodal_frame(X)
    return anisotropic_curvature_pointwise(model, X, xr, xrr)
