import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsf.aniso import BGN, Isotropic, MetricInduced, SmoothKFold, b_matrix, elliptic, h_matrix, phi_jet, regularized_polygon
from acsf.errors import DomainError, StepError
from acsf.geom import DiscreteCurve, interpolate
from acsf.harness.checks import _fd_jacobian, check_scheme_coincidence
from acsf.metric import Cone, TwoMountains, convex_splitting, flat_conformal, flat_graph, hyperbolic
from acsf.schemes import (
    SchemeConfig,
    fdani_system,
    fdhypbol_system,
    fdriem_system,
    manufactured_forcing,
    metric_energy,
    phi_energy,
    run_flow,
    step_fdbgn,
)
from acsf.solver import NewtonSettings

W = 2 * np.pi


def circle(J, center=(0.0, 0.0), r=1.0):
    c = np.asarray(center)
    return interpolate(lambda s: c + r * np.column_stack([np.cos(W * s), np.sin(W * s)]), J)


def perturbed(J, center=(0.0, 0.0), r=1.0, seed=0, amp=0.03):
    rng = np.random.default_rng(seed)
    return circle(J, center, r).positions + amp * r * rng.normal(size=(J, 2))


# ---------------------------------------------------------------------------
# brute-force evaluation of the weak forms with the lumped one-sided-limit rule


def lumped_sum(J, f):
    """h/2 sum_j [f(j, j) + f(j-1, j)]: element j seen from its right and left end nodes."""
    return sum(0.5 / J * (f(j, j) + f((j - 1) % J, j)) for j in range(J))


def hat(J, k, c):
    """Nodal values and element derivatives of the test function chi_k e_c."""
    eta = np.zeros((J, 2))
    eta[k, c] = 1.0
    deta = J * (eta - np.roll(eta, 1, axis=0))
    return eta, deta


def elements(X):
    return len(X) * (X - np.roll(X, 1, axis=0))


def brute_fdani(Xm, X, model, dt, force=None):
    J = len(X)
    dm, d = elements(Xm), elements(X)
    H = [h_matrix(model, None, dm[j]) for j in range(J)]
    flux = [phi_jet(model, None, d[j]).grad_p for j in range(J)]
    R = np.zeros((J, 2))
    for k in range(J):
        for c in range(2):
            eta, deta = hat(J, k, c)
            mass = lumped_sum(J, lambda i, j: H[j] @ (X[i] - Xm[i]) @ eta[i] / dt)
            stiff = sum(flux[j] @ deta[j] for j in range(J)) / J
            rhs = 0.0 if force is None else lumped_sum(J, lambda i, j: force[i] @ eta[i])
            R[k, c] = mass + stiff - rhs
    return R


def brute_fdbgn(Xm, X, model, dt):
    J = len(X)
    dm, d = elements(Xm), elements(X)
    H = [h_matrix(model, None, dm[j]) for j in range(J)]
    B = [b_matrix(model, dm[j]) for j in range(J)]
    R = np.zeros((J, 2))
    for k in range(J):
        for c in range(2):
            eta, deta = hat(J, k, c)
            R[k, c] = lumped_sum(J, lambda i, j: H[j] @ (X[i] - Xm[i]) @ eta[i] / dt) + sum(
                B[j] @ d[j] @ deta[j] for j in range(J)
            ) / J
    return R


def brute_fdriem(Xm, X, field, dt, split):
    J = len(X)
    dm, d = elements(Xm), elements(X)
    model = MetricInduced(field)
    Gm, _ = field.evaluate(Xm)
    dGp = split.plus(X)[1]
    dGm = split.minus(Xm)[1]
    R = np.zeros((J, 2))
    for k in range(J):
        for c in range(2):
            eta, deta = hat(J, k, c)

            def f(i, j):
                mass = h_matrix(model, Xm[i], dm[j]) @ (X[i] - Xm[i]) @ eta[i] / dt
                stiff = Gm[i] @ d[j] @ deta[j]
                grad = 0.5 * sum(eta[i, a] * (dGp[i, a] + dGm[i, a]) @ d[j] @ d[j] for a in range(2))
                return mass + stiff + grad

            R[k, c] = lumped_sum(J, f)
    return R


def brute_fdhypbol(Xm, X, field, dt, c0):
    J = len(X)
    dm, d = elements(Xm), elements(X)
    g, _, _ = field.factor(Xm)
    grad_plus = field.factor(X)[1] + 2 * c0 * X
    grad_minus = -2 * c0 * Xm
    R = np.zeros((J, 2))
    for k in range(J):
        for c in range(2):
            eta, deta = hat(J, k, c)

            def f(i, j):
                sq = d[j] @ d[j]
                mass = g[i] ** 2 * (X[i] - Xm[i]) @ eta[i] * (dm[j] @ dm[j]) / dt
                stiff = g[i] * d[j] @ deta[j]
                return mass + stiff + 0.5 * (grad_plus[i] + grad_minus[i]) @ eta[i] * sq

            R[k, c] = lumped_sum(J, f)
    return R


def assert_close_residual(R, ref):
    assert np.max(np.abs(R - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref)))


class TestAssemblyAgainstDirectSums:
    J = 9

    @pytest.mark.parametrize("model", [Isotropic(), SmoothKFold(3, 0.124), elliptic(0.5), regularized_polygon(3, 1e-2)])
    def test_fdani(self, model):
        Xm = perturbed(self.J, seed=1)
        X = Xm + 0.01 * np.random.default_rng(2).normal(size=Xm.shape)
        force = np.random.default_rng(3).normal(size=Xm.shape)
        sysm = fdani_system(Xm, model, 0.01, force)
        assert_close_residual(sysm.residual(X), brute_fdani(Xm, X, model, 0.01, force))

    @pytest.mark.parametrize("model", [elliptic(0.5), regularized_polygon(2, 1e-2)])
    def test_fdbgn(self, model):
        Xm = perturbed(self.J, seed=4)
        rep = step_fdbgn(DiscreteCurve(Xm), model, 0.05)
        R = brute_fdbgn(Xm, rep.curve.positions, model, 0.05)
        assert np.max(np.abs(R)) <= 1e-12 * np.max(np.abs(rep.curve.positions)) * self.J**2

    @pytest.mark.parametrize(
        "field,center,r",
        [(hyperbolic(), (2.0, 0.0), 1.0), (Cone(np.sqrt(3.0)), (1.0, 0.5), 1.0), (TwoMountains(5.0, 1.0), (0.5, 0.0), 1.5)],
    )
    @pytest.mark.parametrize("c", [0.0, 0.5])
    def test_fdriem(self, field, center, r, c):
        Xm = perturbed(self.J, center, r, seed=5)
        X = Xm + 0.01 * np.random.default_rng(6).normal(size=Xm.shape)
        split = convex_splitting(field, c)
        sysm = fdriem_system(Xm, field, 0.01, split)
        assert_close_residual(sysm.residual(X), brute_fdriem(Xm, X, field, 0.01, split))

    @pytest.mark.parametrize("c", [0.0, 0.5])
    def test_fdhypbol(self, c):
        field = hyperbolic()
        Xm = perturbed(self.J, (2.0, 0.0), 1.0, seed=7)
        X = Xm + 0.01 * np.random.default_rng(8).normal(size=Xm.shape)
        sysm = fdhypbol_system(Xm, field, 0.01, c)
        assert_close_residual(sysm.residual(X), brute_fdhypbol(Xm, X, field, 0.01, c))

    def test_energies(self):
        Xm = perturbed(self.J, (0.5, 0.0), 1.5, seed=9)
        field = TwoMountains(5.0, 1.0)
        Gm, _ = field.evaluate(Xm)
        d = elements(Xm)
        ref = lumped_sum(self.J, lambda i, j: 0.5 * Gm[i] @ d[j] @ d[j])
        assert metric_energy(field, Xm) == pytest.approx(ref, rel=1e-14)
        model = SmoothKFold(6, 0.028)
        ref = lumped_sum(self.J, lambda i, j: phi_jet(model, None, d[j]).value)
        assert phi_energy(model, Xm) == pytest.approx(ref, rel=1e-14)
        induced = MetricInduced(field)
        ref = lumped_sum(self.J, lambda i, j: phi_jet(induced, Xm[i], d[j]).value)
        assert phi_energy(induced, Xm) == pytest.approx(ref, rel=1e-13)


class TestJacobians:
    @pytest.mark.parametrize("model", [SmoothKFold(3, 0.124), SmoothKFold(6, 0.028), elliptic(0.5), regularized_polygon(4, 1e-4)])
    def test_fdani(self, model):
        Xm = perturbed(10, seed=11)
        X = Xm + 0.01 * np.random.default_rng(12).normal(size=Xm.shape)
        sysm = fdani_system(Xm, model, 0.01)
        A, B = sysm.jacobian(X).to_dense(), _fd_jacobian(sysm.residual, X, 1e-6)
        assert np.max(np.abs(A - B)) <= 1e-5 * np.max(np.abs(B))

    @pytest.mark.parametrize(
        "field,center,r",
        [(hyperbolic(), (2.0, 0.0), 1.0), (Cone(np.sqrt(3.0)), (1.0, 0.5), 1.0), (TwoMountains(5.0, 5.0), (0.0, 0.0), 2.0)],
    )
    def test_fdriem(self, field, center, r):
        Xm = perturbed(10, center, r, seed=13)
        X = Xm + 0.01 * np.random.default_rng(14).normal(size=Xm.shape)
        for c in (0.0, 2.0):
            sysm = fdriem_system(Xm, field, 0.01, convex_splitting(field, c))
            A, B = sysm.jacobian(X).to_dense(), _fd_jacobian(sysm.residual, X, 1e-6)
            assert np.max(np.abs(A - B)) <= 1e-5 * np.max(np.abs(B))

    def test_fdhypbol(self):
        Xm = perturbed(10, (2.0, 0.0), 1.0, seed=15)
        X = Xm + 0.01 * np.random.default_rng(16).normal(size=Xm.shape)
        for c in (0.0, 2.0):
            sysm = fdhypbol_system(Xm, hyperbolic(), 0.01, c)
            A, B = sysm.jacobian(X).to_dense(), _fd_jacobian(sysm.residual, X, 1e-6)
            assert np.max(np.abs(A - B)) <= 1e-5 * np.max(np.abs(B))


class TestReductions:
    def trajectory(self, cfg, start, steps=10):
        return [r.curve.positions for r in run_flow(start, cfg, keep_reports=True).reports[:steps]]

    def test_isotropic_reduction(self):
        start = circle(32)
        dt, T = 1e-3, 1e-2
        runs = [
            self.trajectory(SchemeConfig("fdani", dt, T, model=Isotropic()), start),
            self.trajectory(SchemeConfig("fdbgn", dt, T, model=BGN([np.eye(2)])), start),
            self.trajectory(SchemeConfig("fdriem", dt, T, metric=flat_graph()), start),
            self.trajectory(SchemeConfig("fdhypbol", dt, T, metric=flat_conformal()), start),
        ]
        assert all(len(r) == 10 for r in runs)
        for a in runs[1:]:
            for Xa, Xb in zip(runs[0], a):
                assert np.max(np.abs(Xa - Xb)) < 1e-10

    def test_fdriem_equals_fdhypbol_for_conformal(self):
        start = circle(32, (2.0, 0.0))
        a = self.trajectory(SchemeConfig("fdriem", 1e-3, 1e-2, metric=hyperbolic()), start)
        b = self.trajectory(SchemeConfig("fdhypbol", 1e-3, 1e-2, metric=hyperbolic()), start)
        for Xa, Xb in zip(a, b):
            assert np.max(np.abs(Xa - Xb)) < 1e-10

    def test_fdani_equals_fdbgn_for_one_matrix(self):
        res = check_scheme_coincidence(J=16, steps=20)
        assert res.passed, res.line()

    def test_small_time_step_limit(self):
        Xm = perturbed(16, seed=17)
        rep = run_flow(DiscreteCurve(Xm), SchemeConfig("fdani", 1e-12, 1e-12, model=SmoothKFold(3, 0.124)), keep_reports=True)
        assert np.max(np.abs(rep.curve.positions - Xm)) < 1e-9


class TestManufacturedForcing:
    def test_vanishes_for_circle(self):
        f = manufactured_forcing(1.0)
        rho = np.linspace(0, 1, 17)
        for t in (0.0, 0.2, 0.45):
            np.testing.assert_allclose(f(rho, t), 0.0, atol=1e-11)

    def test_extinction(self):
        with pytest.raises(DomainError):
            manufactured_forcing(0.5)(np.zeros(3), 0.5)

    def test_against_finite_differences(self):
        delta = 0.5
        model = elliptic(delta)
        x = lambda r, t: np.sqrt(1 - 2 * t) * np.array([np.cos(W * r), delta * np.sin(W * r)])
        h = 1e-3

        def d1(g, s):
            return (-g(s + 2 * h) + 8 * g(s + h) - 8 * g(s - h) + g(s - 2 * h)) / (12 * h)

        for rho, t in ((0.0, 0.0), (0.13, 0.2), (0.71, 0.4)):
            xr = lambda r: d1(lambda u: x(u, t), r)
            xt = d1(lambda s: x(rho, s), t)
            flux = d1(lambda r: phi_jet(model, None, xr(r)).grad_p, rho)
            ref = h_matrix(model, None, xr(rho)) @ xt - flux
            got = manufactured_forcing(delta)(np.array([rho]), t)[0]
            assert np.max(np.abs(got - ref)) <= 1e-8 * max(1.0, np.max(np.abs(ref)))
        got = manufactured_forcing(delta)(np.array([0.0]), 0.0)[0]
        # x_rho = 2 pi (0, delta), x_t = -(1, 0), H_0 = (2 pi)^2 delta^2 Id, flux' = (delta^2 x1'', x2'')
        np.testing.assert_allclose(got, [-(W**2) * delta**2 + W**2 * delta**2, 0.0], atol=1e-12)

    def test_consistency_with_assembled_residual(self):
        # the exact flow plugged into the scheme leaves h f plus a consistency error
        delta = 0.5
        f = manufactured_forcing(delta)
        x = lambda t: lambda r: np.sqrt(1 - 2 * t) * np.column_stack([np.cos(W * r), delta * np.sin(W * r)])
        gaps = []
        for J in (32, 64, 128):
            dt = 1.0 / J**2
            t0 = 0.1
            Xm = interpolate(x(t0), J).positions
            X = interpolate(x(t0 + dt), J).positions
            sysm = fdani_system(Xm, elliptic(delta), dt)
            ref = f(np.arange(J) / J, t0 + dt) / J
            gaps.append(np.max(np.abs(sysm.residual(X) - ref)) * J)
        assert gaps[0] / gaps[1] > 3.5 and gaps[1] / gaps[2] > 3.5


class TestRunFlow:
    def test_zero_steps(self):
        start = circle(8)
        res = run_flow(start, SchemeConfig("fdani", 0.1, 0.0, model=Isotropic()))
        assert res.steps == 0 and res.status == "completed"
        assert res.curve is start

    def test_step_count(self):
        assert SchemeConfig("fdani", 1e-4, 0.14, model=Isotropic()).steps == 1400
        assert SchemeConfig("fdani", 1 / 1024**2, 0.45, model=Isotropic()).steps == 471860
        assert SchemeConfig("fdani", 1 / 32**2, 0.45, model=Isotropic()).steps == 461

    def test_observers_and_stride(self):
        seen = []
        cfg = SchemeConfig("fdani", 1e-3, 1e-2 + 1e-3, model=Isotropic())
        run_flow(circle(16), cfg, [lambda m, c, r: seen.append((m, r is None))], stride=4)
        assert seen == [(0, True), (4, False), (8, False), (11, False)]

    def test_extinction_stops_cleanly(self):
        cfg = SchemeConfig("fdani", 1e-2, 2.0, model=Isotropic())
        res = run_flow(circle(16, r=0.3), cfg)
        assert res.status == "extinct"
        assert res.steps < cfg.steps
        assert np.all(np.diff(res.energies) <= 0)

    def test_degenerate_start(self):
        X = circle(8).positions.copy()
        X[3] = X[2]
        res = run_flow(DiscreteCurve(X), SchemeConfig("fdani", 1e-3, 1e-2, model=Isotropic()))
        assert res.status == "degenerate" and res.steps == 0

    def test_domain_exit_is_annotated(self):
        cfg = SchemeConfig("fdriem", 1e-3, 1e-2, metric=hyperbolic())
        with pytest.raises(StepError) as info:
            run_flow(circle(16, (0.5, 0.0)), cfg)
        assert info.value.step == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SchemeConfig("fdbgn", 1e-3, 1.0, model=SmoothKFold(3, 0.1))
        with pytest.raises(ValueError):
            SchemeConfig("fdani", 1e-3, 1.0, model=MetricInduced(hyperbolic()))
        with pytest.raises(ValueError):
            SchemeConfig("fdhypbol", 1e-3, 1.0, metric=Cone(1.0))
        with pytest.raises(ValueError):
            SchemeConfig("fdriem", 1e-3, 1.0, metric=hyperbolic(), forcing=manufactured_forcing())
        with pytest.raises(ValueError):
            SchemeConfig("fdani", 0.0, 1.0, model=Isotropic())
        with pytest.raises(ValueError):
            SchemeConfig("nope", 1e-3, 1.0, model=Isotropic())

    def test_fig1_configuration_start(self):
        # a short stretch of the elliptic run: nondegenerate, Newton converges in one iteration
        from acsf.harness.config import preset_config, build_initial, build_model

        cfg = preset_config("fig1_ellipse")
        model = build_model(cfg["model"])
        start = build_initial(cfg["initial"], cfg["J"], model)
        res = run_flow(start, SchemeConfig("fdbgn", 1e-4, 1e-2, model=model), keep_reports=True)
        assert res.status == "completed"
        assert np.all(np.diff(res.energies) <= 0)


MODELS = [Isotropic(), SmoothKFold(3, 0.124), SmoothKFold(6, 0.028), elliptic(0.5), regularized_polygon(2, 1e-2)]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(len(MODELS))), st.sampled_from([1e-4, 1e-2, 1.0]), st.integers(0, 10_000))
def test_fdani_energy_never_increases(idx, dt, seed):
    start = DiscreteCurve(perturbed(16, seed=seed, amp=0.1))
    res = run_flow(start, SchemeConfig("fdani", dt, 3 * dt, model=MODELS[idx]))
    e = np.asarray(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * (1 + np.abs(e[:-1])))


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([1e-4, 1e-2, 1.0]), st.integers(0, 10_000))
def test_fdhypbol_energy_never_increases(dt, seed):
    start = DiscreteCurve(perturbed(16, (2.0, 0.0), 1.0, seed=seed, amp=0.1))
    res = run_flow(start, SchemeConfig("fdhypbol", dt, 3 * dt, metric=hyperbolic(), newton=NewtonSettings(max_iter=40)))
    e = np.asarray(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * (1 + np.abs(e[:-1])))
