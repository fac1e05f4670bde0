"""Invariant suites run by ``acsf check``; each returns a :class:`CheckResult`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..aniso import BGN, Isotropic, MetricInduced, SmoothKFold, anisotropic_curvature, elliptic, h_matrix, perp, regularized_polygon
from ..geom import DiscreteCurve, interpolate
from ..metric import (
    Cone,
    TwoMountains,
    convex_splitting,
    flat_conformal,
    flat_graph,
    geodesic_curvature,
    geodesic_curvature_pointwise,
    hyperbolic,
    splitting_constant,
)
from ..schemes import SchemeConfig, fdani_system, fdhypbol_system, fdriem_system, run_flow
from ..solver import CyclicBlockTridiagonal, cyclic_solve
from .analysis import eoc

__all__ = [
    "CheckResult",
    "bundled_models",
    "bundled_metrics",
    "stability_cases",
    "energy_increase",
    "check_solver",
    "check_hposdef",
    "check_jacobians",
    "check_stability",
    "check_scheme_coincidence",
    "check_curvature_agreement",
    "run_checks",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}) {self.detail}".rstrip()


def bundled_models() -> dict:
    """Space independent models shipped with the presets, keyed by name."""
    return {
        "isotropic": Isotropic(),
        "kfold3": SmoothKFold(3, 0.124),
        "kfold6": SmoothKFold(6, 0.028),
        "elliptic": elliptic(0.5),
        "square": regularized_polygon(2, 1e-2),
        "hexagon": regularized_polygon(3, 1e-2),
        "octagon": regularized_polygon(4, 1e-4),
    }


def bundled_metrics() -> dict:
    """Metric fields with a circle inside their domain, as ``(field, center, radius)``."""
    return {
        "hyperbolic": (hyperbolic(), (2.0, 0.0), 1.0),
        "flat_conformal": (flat_conformal(), (0.0, 0.0), 1.0),
        "flat": (flat_graph(), (0.0, 0.0), 1.0),
        "cone": (Cone(np.sqrt(3.0)), (2.0, 0.0), 1.35),
        "mountains_small": (TwoMountains(1.0, 1.0), (0.0, 0.0), 2.0),
        "mountains_uneven": (TwoMountains(5.0, 1.0), (0.0, 0.0), 2.0),
        "mountains_stuck": (TwoMountains(5.0, 5.0), (0.0, 0.0), 2.0),
    }


def _circle(J, center=(0.0, 0.0), radius=1.0) -> DiscreteCurve:
    c = np.asarray(center, dtype=float)
    return interpolate(lambda r: c + radius * np.column_stack([np.cos(2 * np.pi * r), np.sin(2 * np.pi * r)]), J)


def check_solver(sizes=(3, 4, 8, 17, 32), seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Cyclic block solve against a dense LU solve on random well conditioned systems."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for J in sizes:
        A = CyclicBlockTridiagonal(
            rng.normal(size=(J, 2, 2)) + 6.0 * np.eye(2), rng.normal(size=(J, 2, 2)), rng.normal(size=(J, 2, 2))
        )
        b = rng.normal(size=(J, 2))
        x = cyclic_solve(A, b)
        ref = np.linalg.solve(A.to_dense(), b.ravel()).reshape(J, 2)
        worst = max(worst, float(np.linalg.norm(x - ref) / np.linalg.norm(ref)))
    return CheckResult("cyclic_solve vs dense", worst <= tol, worst, tol)


def check_hposdef(samples: int = 10_000, seed: int = 1, tol: float = 1e-12) -> CheckResult:
    """``H w . w = a^2 gamma^2 |w|^2 / |gamma_p|^2`` with both sides evaluated independently."""
    rng = np.random.default_rng(seed)
    models = list(bundled_models().values())
    models.append(MetricInduced(TwoMountains(5.0, 1.0)))
    models.append(MetricInduced(hyperbolic()))
    worst = 0.0
    for model in models:
        p = rng.normal(size=(samples, 2))
        w = rng.normal(size=(samples, 2))
        if model.space_independent:
            z = None
        else:
            z = rng.uniform(-1.5, 3.0, size=(samples, 2))
            z[:, 0] = np.abs(z[:, 0]) + 0.1
        H = h_matrix(model, z, p)
        lhs = np.einsum("ni,nij,nj->n", w, H, w)
        q = perp(p)
        jet = model.jet(z, q)
        a, _ = model.weight(z if z is not None else np.zeros((samples, 2)))
        rhs = (a * jet.value) ** 2 * np.einsum("ni,ni->n", w, w) / np.einsum("ni,ni->n", jet.grad_p, jet.grad_p)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
    return CheckResult("H quadratic form identity", worst <= tol, worst, tol, f"{samples} samples per model")


def _fd_jacobian(residual: Callable, X: np.ndarray, eps: float) -> np.ndarray:
    n = X.size
    out = np.empty((n, n))
    flat = X.ravel()
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        rp = residual((flat + e).reshape(X.shape)).ravel()
        rm = residual((flat - e).reshape(X.shape)).ravel()
        out[:, i] = (rp - rm) / (2 * eps)
    return out


def check_jacobians(J: int = 12, seed: int = 2, eps: float = 1e-6, tol: float = 1e-6) -> CheckResult:
    """Analytic step Jacobians of the nonlinear schemes against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    names = []
    for name, model in bundled_models().items():
        Xm = _circle(J).positions + 0.02 * rng.normal(size=(J, 2))
        X = Xm + 0.01 * rng.normal(size=(J, 2))
        sysm = fdani_system(Xm, model, 0.01)
        worst = max(worst, _rel(sysm.jacobian(X).to_dense(), _fd_jacobian(sysm.residual, X, eps)))
        names.append(name)
    for name, (field, c, r) in bundled_metrics().items():
        Xm = _circle(J, c, r).positions + 0.02 * rng.normal(size=(J, 2))
        X = Xm + 0.01 * rng.normal(size=(J, 2))
        for split in (0.0, 0.5):
            sysm = fdriem_system(Xm, field, 0.01, convex_splitting(field, split))
            worst = max(worst, _rel(sysm.jacobian(X).to_dense(), _fd_jacobian(sysm.residual, X, eps)))
            if name in ("hyperbolic", "flat_conformal"):
                sysh = fdhypbol_system(Xm, field, 0.01, split)
                worst = max(worst, _rel(sysh.jacobian(X).to_dense(), _fd_jacobian(sysh.residual, X, eps)))
        names.append(name)
    return CheckResult("step Jacobians vs finite differences", worst <= tol, worst, tol)


def _rel(A, B) -> float:
    return float(np.max(np.abs(A - B)) / max(np.max(np.abs(B)), 1e-300))


def _splitting(name: str) -> float:
    """Splitting constant making ``G_+`` convex on a box around the bundled circle."""
    field, c, r = bundled_metrics()[name]
    c = np.asarray(c, dtype=float)
    return splitting_constant(field, c - 1.1 * r, c + 1.1 * r)


def stability_cases(J_values=(16, 64), dts=(1e-4, 1e-2, 1.0)):
    """``(label, SchemeConfig, initial curve)`` for every scheme, bundled model or metric, J and dt."""
    cases = []
    for J in J_values:
        for dt in dts:
            T = 20 * dt
            for name, model in bundled_models().items():
                cases.append((f"fdani/{name}/J={J}/dt={dt:g}", SchemeConfig("fdani", dt, T, model=model), _circle(J)))
                if isinstance(model, BGN):
                    cases.append((f"fdbgn/{name}/J={J}/dt={dt:g}", SchemeConfig("fdbgn", dt, T, model=model), _circle(J)))
            for name, (field, c, r) in bundled_metrics().items():
                split = _splitting(name)
                cfg = SchemeConfig("fdriem", dt, T, metric=field, splitting=split)
                cases.append((f"fdriem/{name}/J={J}/dt={dt:g}", cfg, _circle(J, c, r)))
                if name in ("hyperbolic", "flat_conformal"):
                    cases.append(
                        (f"fdhypbol/{name}/J={J}/dt={dt:g}", SchemeConfig("fdhypbol", dt, T, metric=field), _circle(J, c, r))
                    )
    return cases


def energy_increase(energies) -> float:
    """Largest step increase of the energy relative to ``1 + |E|`` (nonpositive when monotone)."""
    e = np.asarray(energies, dtype=float)
    if e.size < 2:
        return -np.inf
    return float(np.max(np.diff(e) / (1.0 + np.abs(e[:-1]))))


def check_stability(J_values=(16, 64), dts=(1e-4, 1e-2, 1.0), slack: float = 1e-12) -> CheckResult:
    """Lumped energy never increases over 20 steps from a circle, for every case."""
    worst = -np.inf
    failed = []
    for label, cfg, curve in stability_cases(J_values, dts):
        res = run_flow(curve, cfg)
        inc = energy_increase(res.energies)
        worst = max(worst, inc)
        if inc > slack:
            failed.append(label)
    detail = f"failed: {', '.join(failed)}" if failed else ""
    return CheckResult("energy stability", not failed, max(worst, 0.0), slack, detail)


def check_scheme_coincidence(J: int = 32, steps: int = 50, dt: float = 1e-3, tol: float = 1e-8) -> CheckResult:
    """FDANI and FDBGN trajectories for one-term BGN models."""
    worst = 0.0
    for mats in ([[1.0, 0.0], [0.0, 0.25]], [[2.0, 0.3], [0.3, 0.5]]):
        model = BGN([mats])
        start = _circle(J)
        a = run_flow(start, SchemeConfig("fdani", dt, steps * dt, model=model), keep_reports=True)
        b = run_flow(start, SchemeConfig("fdbgn", dt, steps * dt, model=model), keep_reports=True)
        for ra, rb in zip(a.reports, b.reports):
            worst = max(worst, float(np.max(np.linalg.norm(ra.curve.positions - rb.curve.positions, axis=1))))
    return CheckResult("fdani = fdbgn for L = 1", worst <= tol, worst, tol, f"{steps} steps")


def check_curvature_agreement(levels=(32, 64, 128, 256), min_order: float = 1.9) -> CheckResult:
    """Anisotropic curvature of the induced density against geodesic curvature.

    Both diagnostics are evaluated on nodal interpolants of a smooth curve
    and compared with the geodesic curvature of the exact curve; the smaller
    of the two observed orders is reported.
    """
    field = Cone(np.sqrt(3.0))
    model = MetricInduced(field)
    w = 2 * np.pi

    def x(r):
        return np.column_stack([2.0 + np.cos(w * r) + 0.2 * np.cos(2 * w * r), 0.7 * np.sin(w * r)])

    def exact(r):
        xr = np.column_stack([-w * np.sin(w * r) - 0.4 * w * np.sin(2 * w * r), 0.7 * w * np.cos(w * r)])
        xrr = np.column_stack([-w * w * np.cos(w * r) - 0.8 * w * w * np.cos(2 * w * r), -0.7 * w * w * np.sin(w * r)])
        return geodesic_curvature_pointwise(field, x(r), xr, xrr)

    err_g, err_a = [], []
    for J in levels:
        curve = interpolate(x, J)
        ref = exact(curve.mesh.nodes)
        err_g.append(float(np.max(np.abs(geodesic_curvature(field, curve) - ref))))
        err_a.append(float(np.max(np.abs(anisotropic_curvature(model, curve) - ref))))
    order = min(eoc(err_g, levels)[-1], eoc(err_a, levels)[-1])
    return CheckResult("kappa_gamma vs kappa_g order", order >= min_order, order, min_order)


def run_checks(quick: bool = True) -> list[CheckResult]:
    """All suites; ``quick`` reduces the stability sweep to ``J = 16``."""
    return [
        check_solver(),
        check_hposdef(),
        check_jacobians(),
        check_stability(J_values=(16,) if quick else (16, 64)),
        check_scheme_coincidence(),
        check_curvature_agreement(),
    ]

