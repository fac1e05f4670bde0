"""Fully discrete time stepping for anisotropic and geodesic curve shortening flow.

Every step solves for new nodal positions ``X`` given the previous ones ``Xm``.
All schemes share the structure

``mass_k (X_k - Xm_k) / dt + (elliptic term)_k + (lower order term)_k = 0``

for each node ``k``, where ``mass_k`` is the lumped DeTurck matrix at node ``k``
built from the one-sided limits of the element derivatives of ``Xm``. The
residuals are assembled in this form (tested against hat functions, so every
entry carries one factor of ``h`` from the lumped mass) and their Jacobians
are cyclic block tridiagonal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .aniso import BGN, Anisotropy, b_matrix, h_matrix, phi_jet
from .errors import AcsfError, DegenerateCurveError, DomainError, NewtonConvergenceError, StepError
from .geom import DiscreteCurve, element_derivative, element_lengths
from .metric import Conformal, MetricField, Splitting, convex_splitting
from .solver import CyclicBlockTridiagonal, NewtonSettings, cyclic_solve, newton_solve

__all__ = [
    "Scheme",
    "SchemeConfig",
    "StepReport",
    "FlowResult",
    "step_fdani",
    "step_fdbgn",
    "step_fdriem",
    "step_fdhypbol",
    "step",
    "run_flow",
    "phi_energy",
    "metric_energy",
    "scheme_energy",
    "riemannian_h",
    "manufactured_forcing",
    "fdani_system",
    "fdriem_system",
    "fdhypbol_system",
    "fdbgn_matrix",
]

log = logging.getLogger(__name__)

EXTINCT_LENGTH = 1e-10
EXTINCT_ENERGY = 1e-12


class Scheme(str, Enum):
    FDANI = "fdani"
    FDBGN = "fdbgn"
    FDRIEM = "fdriem"
    FDHYPBOL = "fdhypbol"


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection, time step, horizon and model data for a flow run.

    ``model`` is required by FDANI and FDBGN, ``metric`` by FDRIEM and FDHYPBOL.
    ``splitting`` is the constant ``c >= 0`` of the convex splitting
    ``G_+ = G + c|z|^2 Id``. ``forcing(rho, t)`` returns an ``(n, 2)`` array.
    The number of steps is ``ceil(T/dt)`` (up to roundoff), so the last time
    level is the first one at or beyond ``T``.
    """

    scheme: Scheme
    dt: float
    T: float
    model: Anisotropy | None = None
    metric: MetricField | None = None
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    forcing: Callable | None = None
    splitting: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not self.T >= 0:
            raise ValueError("final time must be nonnegative")
        if self.splitting < 0:
            raise ValueError("splitting constant must be nonnegative")
        s = self.scheme
        if s in (Scheme.FDANI, Scheme.FDBGN):
            if self.model is None or not self.model.space_independent:
                raise ValueError(f"{s.value} needs a space-independent anisotropy model")
            if s is Scheme.FDBGN and not isinstance(self.model, BGN):
                raise ValueError("fdbgn needs a BGN anisotropy model")
        else:
            if self.metric is None:
                raise ValueError(f"{s.value} needs a metric field")
            if s is Scheme.FDHYPBOL and not isinstance(self.metric, Conformal):
                raise ValueError("fdhypbol needs a conformal metric")
        if self.forcing is not None and s is not Scheme.FDANI:
            raise ValueError("forcing is only supported by fdani")

    @property
    def steps(self) -> int:
        return max(0, math.ceil(self.T / self.dt - 1e-9))


@dataclass
class StepReport:
    """Outcome of one time step."""

    curve: DiscreteCurve
    energy_before: float
    energy_after: float
    newton_iters: int
    linear_residual: float
    residual: float


@dataclass
class FlowResult:
    """Final curve, stop status and, optionally, all step reports."""

    curve: DiscreteCurve
    status: str
    steps: int
    energies: list = field(default_factory=list)
    reports: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# energies


def phi_energy(model: Anisotropy, curve) -> float:
    """Lumped energy ``(Phi(x, x_rho), 1)^h`` for an anisotropy model."""
    X = _pos(curve)
    J = X.shape[0]
    d = element_derivative(X)
    if model.space_independent:
        return float(np.sum(phi_jet(model, None, d).value)) / J
    right = phi_jet(model, X, d).value
    left = phi_jet(model, np.roll(X, 1, axis=0), d).value
    return 0.5 / J * float(np.sum(right + left))


def metric_energy(metric: MetricField, curve) -> float:
    """Lumped energy ``(G(x) x_rho . x_rho / 2, 1)^h``."""
    X = _pos(curve)
    J = X.shape[0]
    d = element_derivative(X)
    G, _ = metric.evaluate(X)
    q = np.einsum("nij,ni,nj->n", G, d, d) + np.einsum("nij,ni,nj->n", np.roll(G, 1, axis=0), d, d)
    return 0.25 / J * float(np.sum(q))


def scheme_energy(config: SchemeConfig, curve) -> float:
    """The energy that the configured scheme decreases."""
    if config.scheme in (Scheme.FDANI, Scheme.FDBGN):
        return phi_energy(config.model, curve)
    return metric_energy(config.metric, curve)


# ----------------------------------------------------------------------------
# helpers


def _pos(curve) -> np.ndarray:
    return curve.positions if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)


def _require_elements(X: np.ndarray) -> np.ndarray:
    d = element_derivative(X)
    lengths = np.hypot(d[:, 0], d[:, 1])
    if not np.all(lengths > 0):
        j = int(np.argmin(lengths))
        raise DegenerateCurveError(f"element {j} has zero length", element=j)
    return d


def _lumped_mass(H: np.ndarray, J: int) -> np.ndarray:
    """Nodal mass ``h/2 (H(element k) + H(element k+1))`` from element values."""
    return 0.5 / J * (H + np.roll(H, -1, axis=0))


def riemannian_h(G: np.ndarray, p: np.ndarray) -> np.ndarray:
    """DeTurck matrix of a metric in closed form, batched over rows."""
    Gp = np.einsum("nij,nj->ni", G, p)
    a = np.einsum("ni,ni->n", Gp, p)
    b = np.einsum("ni,ni->n", Gp, np.stack([-p[:, 1], p[:, 0]], axis=-1))
    scale = np.linalg.det(G) * a / np.einsum("ni,ni->n", Gp, Gp)
    H = np.empty(G.shape)
    H[:, 0, 0] = H[:, 1, 1] = scale * a
    H[:, 0, 1] = -scale * b
    H[:, 1, 0] = scale * b
    return H


class _System:
    """Residual and Jacobian of one nonlinear step; caches the last evaluation point."""

    def __init__(self, Xm: np.ndarray, dt: float):
        self.Xm = Xm
        self.dt = dt
        self.J = Xm.shape[0]
        self._key = None
        self._cache = None

    def _eval(self, X):
        raise NotImplementedError

    def _cached(self, X):
        X = np.asarray(X, dtype=float).reshape(self.J, 2)
        if self._key is None or not np.array_equal(self._key, X):
            self._cache = self._eval(X)
            self._key = X.copy()
        return self._cache

    def residual(self, X) -> np.ndarray:
        return self._cached(X)[0]

    def jacobian(self, X) -> CyclicBlockTridiagonal:
        return self._cached(X)[1]()

    def admissible(self, X) -> bool:
        return True


CONTINUATION_MIN_FRACTION = 1e-6


def _newton_step(make_system: Callable, dt: float, X0, settings):
    """Newton from ``X0``; on failure, adaptive continuation in the time step.

    ``make_system(tau)`` builds the step with time step ``tau``; at ``tau = 0``
    its solution is ``X0``. The continuation increases ``tau`` towards ``dt``,
    starting each solve from the previous solution, doubling the increment
    after a success and shrinking it after a failure. Only the solution for
    ``tau = dt`` is returned, so the result solves the requested step.
    """
    system = make_system(dt)
    try:
        return newton_solve(system.residual, system.jacobian, X0, settings, admissible=system.admissible)
    except NewtonConvergenceError as exc:
        log.info("Newton failed (%s); retrying with time step continuation", exc)
        failure = exc
    X = np.array(X0, dtype=float)
    done, inc, total = 0.0, 0.01 * dt, 0
    while done < dt:
        tau = min(dt, done + inc)
        sub = make_system(tau)
        try:
            res = newton_solve(sub.residual, sub.jacobian, X, settings, admissible=sub.admissible)
        except NewtonConvergenceError as exc:
            inc *= 0.25
            failure = exc
            if inc < CONTINUATION_MIN_FRACTION * dt:
                raise failure
            continue
        X, done, inc = res.x, tau, 2.0 * inc
        total += res.iterations
    res.iterations = total
    return res


# ----------------------------------------------------------------------------
# FDANI


class fdani_system(_System):
    """Nonlinear system of the DeTurck step for a space-independent anisotropy."""

    def __init__(self, Xm, model: Anisotropy, dt: float, force: np.ndarray | None = None):
        super().__init__(Xm, dt)
        dm = _require_elements(Xm)
        self.model = model
        self.mass = _lumped_mass(h_matrix(model, None, dm), self.J)
        self.force = None if force is None else np.asarray(force, dtype=float) / self.J

    def _eval(self, X):
        J = self.J
        d = element_derivative(X)
        jet = phi_jet(self.model, None, d)
        flux = jet.grad_p
        R = np.einsum("kij,kj->ki", self.mass, X - self.Xm) / self.dt + flux - np.roll(flux, -1, axis=0)
        if self.force is not None:
            R = R - self.force

        def jac():
            A = jet.hess_p * J
            Ap = np.roll(A, -1, axis=0)
            return CyclicBlockTridiagonal(self.mass / self.dt + A + Ap, -A, -Ap)

        return R, jac


def step_fdani(
    curve: DiscreteCurve,
    model: Anisotropy,
    dt: float,
    forcing: Callable | None = None,
    settings: NewtonSettings | None = None,
) -> StepReport:
    """One step of the DeTurck scheme for a space-independent anisotropy.

    ``forcing(rho, t)`` is evaluated at the new time level and tested with the
    lumped inner product.
    """
    Xm = curve.positions
    t_new = curve.time + dt
    force = None
    if forcing is not None:
        force = np.asarray(forcing(curve.mesh.nodes, t_new), dtype=float)
    e0 = phi_energy(model, Xm)
    res = _newton_step(lambda tau: fdani_system(Xm, model, tau, force), dt, Xm, settings)
    new = DiscreteCurve(res.x, t_new)
    return StepReport(new, e0, phi_energy(model, new), res.iterations, res.linear_residual, res.residual)


# ----------------------------------------------------------------------------
# FDBGN


def fdbgn_matrix(Xm: np.ndarray, model: BGN, dt: float) -> tuple[CyclicBlockTridiagonal, np.ndarray]:
    """Matrix of the linear step (elliptic term frozen through ``B(x^m_rho)``) and the lumped mass."""
    J = Xm.shape[0]
    dm = _require_elements(Xm)
    mass = _lumped_mass(h_matrix(model, None, dm), J)
    B = b_matrix(model, dm) * J
    Bp = np.roll(B, -1, axis=0)
    return CyclicBlockTridiagonal(mass / dt + B + Bp, -B, -Bp), mass


def step_fdbgn(curve: DiscreteCurve, model: BGN, dt: float, settings: NewtonSettings | None = None) -> StepReport:
    """One linear step for a BGN anisotropy (a single cyclic block solve)."""
    Xm = curve.positions
    A, mass = fdbgn_matrix(Xm, model, dt)
    rhs = np.einsum("kij,kj->ki", mass, Xm) / dt
    X = cyclic_solve(A, rhs)
    lin = float(np.max(np.abs(A.matvec(X) - rhs)))
    new = DiscreteCurve(X, curve.time + dt)
    return StepReport(new, phi_energy(model, Xm), phi_energy(model, new), 1, lin, lin)


# ----------------------------------------------------------------------------
# FDRIEM


class fdriem_system(_System):
    """Nonlinear system of the step for a general metric with split gradient term."""

    def __init__(self, Xm, metric: MetricField, dt: float, splitting: Splitting | None = None):
        super().__init__(Xm, dt)
        metric.check_domain(Xm)
        dm = _require_elements(Xm)
        self.metric = metric
        self.split = splitting or convex_splitting(metric)
        J = self.J
        G, _ = metric.evaluate(Xm)
        # mass at node k uses G(Xm_k) with both adjacent element derivatives
        Hr = riemannian_h(G, dm)
        Hl = riemannian_h(G, np.roll(dm, -1, axis=0))
        self.mass = 0.5 / J * (Hr + Hl)
        # element j stiffness averages G over its end points
        self.Gbar = 0.5 * (G + np.roll(G, 1, axis=0))
        self.dGminus = self.split.minus(Xm)[1]

    def admissible(self, X) -> bool:
        return bool(np.all(self.metric.in_domain(np.reshape(X, (self.J, 2)))))

    def _eval(self, X):
        J = self.J
        d = element_derivative(X)
        dn = np.roll(d, -1, axis=0)
        _, dGp = self.split.plus(X)
        M = dGp + self.dGminus  # M[k, c] = G_{+,c}(X_k) + G_{-,c}(Xm_k)
        S = d[:, :, None] * d[:, None, :] + dn[:, :, None] * dn[:, None, :]
        Gd = np.einsum("kij,kj->ki", self.Gbar, d)
        R = (
            np.einsum("kij,kj->ki", self.mass, X - self.Xm) / self.dt
            + Gd
            - np.roll(Gd, -1, axis=0)
            + 0.25 / J * np.einsum("kcab,kab->kc", M, S)
        )

        def jac():
            d2 = self.split.plus_second(X)
            Md = np.einsum("kcab,kb->kca", M, d)
            Mdn = np.einsum("kcab,kb->kca", M, dn)
            Gb = self.Gbar * J
            Gbn = np.roll(Gb, -1, axis=0)
            diag = (
                self.mass / self.dt
                + Gb
                + Gbn
                + 0.25 / J * np.einsum("kceab,kab->kce", d2, S)
                + 0.5 * (Md - Mdn)
            )
            return CyclicBlockTridiagonal(diag, -Gb - 0.5 * Md, -Gbn + 0.5 * Mdn)

        return R, jac




def step_fdriem(
    curve: DiscreteCurve,
    metric: MetricField,
    dt: float,
    settings: NewtonSettings | None = None,
    splitting: Splitting | None = None,
) -> StepReport:
    """One step of the scheme for geodesic curvature flow in a general metric."""
    Xm = curve.positions
    e0 = metric_energy(metric, Xm)
    res = _newton_step(lambda tau: fdriem_system(Xm, metric, tau, splitting), dt, Xm, settings)
    metric.check_domain(res.x)
    new = DiscreteCurve(res.x, curve.time + dt)
    return StepReport(new, e0, metric_energy(metric, new), res.iterations, res.linear_residual, res.residual)


# ----------------------------------------------------------------------------
# FDHYPBOL


class fdhypbol_system(_System):
    """Scalar-factor form of the metric step for ``G = g Id``."""

    def __init__(self, Xm, metric: Conformal, dt: float, c: float = 0.0):
        super().__init__(Xm, dt)
        metric.check_domain(Xm)
        dm = _require_elements(Xm)
        self.metric = metric
        self.c = float(c)
        J = self.J
        g, _, _ = metric.factor(Xm)
        sq = np.einsum("ni,ni->n", dm, dm)
        self.mass = 0.5 / J * g * g * (sq + np.roll(sq, -1))
        self.gbar = 0.5 * (g + np.roll(g, 1))
        # explicit part of the gradient: grad g_-(Xm) = -2 c Xm
        self.grad_minus = -2.0 * self.c * Xm

    def admissible(self, X) -> bool:
        return bool(np.all(self.metric.in_domain(np.reshape(X, (self.J, 2)))))

    def _eval(self, X):
        J = self.J
        d = element_derivative(X)
        dn = np.roll(d, -1, axis=0)
        _, dg, hg = self.metric.factor(X)
        gp = dg + 2.0 * self.c * X
        m = gp + self.grad_minus
        sq = np.einsum("ni,ni->n", d, d) + np.einsum("ni,ni->n", dn, dn)
        gd = self.gbar[:, None] * d
        R = self.mass[:, None] * (X - self.Xm) / self.dt + gd - np.roll(gd, -1, axis=0) + 0.25 / J * m * sq[:, None]

        def jac():
            eye = np.eye(2)
            gb = self.gbar * J
            gbn = np.roll(gb, -1)
            hp = hg + 2.0 * self.c * eye
            md = m[:, :, None] * d[:, None, :]
            mdn = m[:, :, None] * dn[:, None, :]
            diag = (
                (self.mass / self.dt + gb + gbn)[:, None, None] * eye
                + 0.25 / J * hp * sq[:, None, None]
                + 0.5 * (md - mdn)
            )
            return CyclicBlockTridiagonal(diag, -gb[:, None, None] * eye - 0.5 * md, -gbn[:, None, None] * eye + 0.5 * mdn)

        return R, jac


def step_fdhypbol(
    curve: DiscreteCurve,
    metric: Conformal,
    dt: float,
    settings: NewtonSettings | None = None,
    c: float = 0.0,
) -> StepReport:
    """One step of the conformal-metric scheme (``g_+ = g + c|z|^2``, ``g_- = -c|z|^2``)."""
    Xm = curve.positions
    e0 = metric_energy(metric, Xm)
    res = _newton_step(lambda tau: fdhypbol_system(Xm, metric, tau, c), dt, Xm, settings)
    metric.check_domain(res.x)
    new = DiscreteCurve(res.x, curve.time + dt)
    return StepReport(new, e0, metric_energy(metric, new), res.iterations, res.linear_residual, res.residual)


# ----------------------------------------------------------------------------
# driver


def step(curve: DiscreteCurve, config: SchemeConfig) -> StepReport:
    """Advance ``curve`` by one step of the configured scheme."""
    s = config.scheme
    if s is Scheme.FDANI:
        return step_fdani(curve, config.model, config.dt, config.forcing, config.newton)
    if s is Scheme.FDBGN:
        return step_fdbgn(curve, config.model, config.dt)
    if s is Scheme.FDRIEM:
        return step_fdriem(curve, config.metric, config.dt, config.newton, convex_splitting(config.metric, config.splitting))
    return step_fdhypbol(curve, config.metric, config.dt, config.newton, config.splitting)


def run_flow(
    initial: DiscreteCurve,
    config: SchemeConfig,
    observers: Iterable[Callable] = (),
    stride: int = 1,
    keep_reports: bool = False,
) -> FlowResult:
    """Apply the configured step ``config.steps`` times.

    Each observer is called as ``observer(m, curve, report)`` for the initial
    curve (``m = 0``, ``report=None``), every ``stride`` steps and at the last
    step. The run stops early with status ``"extinct"`` once the curve has
    shrunk to machine scale, or ``"degenerate"`` if an element collapses.
    Other step failures are raised as :class:`StepError`.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    observers = list(observers)
    curve = initial
    energies = [scheme_energy(config, curve)]
    reports = []
    for obs in observers:
        obs(0, curve, None)
    M = config.steps
    status = "completed"
    m = 0
    while m < M:
        try:
            rep = step(curve, config)
        except DegenerateCurveError as exc:
            log.info("run stopped at step %d: %s", m + 1, exc)
            status = "degenerate"
            break
        except (AcsfError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise StepError(m + 1, exc) from exc
        m += 1
        curve = rep.curve
        energies.append(rep.energy_after)
        if keep_reports:
            reports.append(rep)
        shrunk = element_lengths(curve.positions).min() < EXTINCT_LENGTH or abs(rep.energy_after) < EXTINCT_ENERGY
        if observers and (m % stride == 0 or m == M or shrunk):
            for obs in observers:
                obs(m, curve, rep)
        if shrunk:
            status = "extinct"
            break
    return FlowResult(curve, status, m, energies, reports)


# ----------------------------------------------------------------------------
# manufactured forcing


def manufactured_forcing(delta: float = 0.5) -> Callable:
    """Right hand side that makes the shrinking ellipse an exact solution.

    For ``x(rho, t) = sqrt(1-2t) (cos 2 pi rho, delta sin 2 pi rho)`` and the
    elliptic density ``gamma(p) = sqrt(p1^2 + delta^2 p2^2)`` this returns
    ``f = H_0(x_rho) x_t - (delta^2 x_{1,rho rho}, x_{2,rho rho})``.
    """
    delta = float(delta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    w = 2.0 * np.pi

    def f(rho, t):
        if t >= 0.5:
            raise DomainError(f"the exact solution is extinct at t = 0.5, got t = {t}")
        rho = np.asarray(rho, dtype=float)
        s = np.sqrt(1.0 - 2.0 * t)
        c, sn = np.cos(w * rho), np.sin(w * rho)
        xr = np.stack([-w * s * sn, w * s * delta * c], axis=-1)
        xt = -np.stack([c, delta * sn], axis=-1) / s
        xrr = -(w * w) * s * np.stack([c, delta * sn], axis=-1)
        # H_0 for gamma_0(q) = sqrt(q1^2 + delta^2 q2^2) at q = perp(x_rho)
        q = np.stack([-xr[..., 1], xr[..., 0]], axis=-1)
        g = np.sqrt(q[..., 0] ** 2 + delta**2 * q[..., 1] ** 2)
        gp = np.stack([q[..., 0], delta**2 * q[..., 1]], axis=-1) / g[..., None]
        scale = g / np.sum(gp * gp, axis=-1)
        off = np.sum(gp * xr, axis=-1)
        Hxt = scale[..., None] * np.stack(
            [g * xt[..., 0] + off * xt[..., 1], -off * xt[..., 0] + g * xt[..., 1]], axis=-1
        )
        return Hxt - np.stack([delta**2 * xrr[..., 0], xrr[..., 1]], axis=-1)

    return f
