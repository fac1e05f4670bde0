import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsf.aniso import (
    BGN,
    Isotropic,
    MetricInduced,
    SmoothKFold,
    anisotropic_curvature,
    assert_convex,
    b_matrix,
    density_jet,
    dual,
    elliptic,
    h_matrix,
    perp,
    phi_jet,
    regularized_polygon,
    sample_frank,
    sample_wulff,
)
from acsf.errors import DomainError
from acsf.geom import interpolate
from acsf.metric import Cone, TwoMountains, hyperbolic

W = 2 * np.pi

SPACE_FREE = {
    "isotropic": Isotropic(),
    "kfold3": SmoothKFold(3, 0.124),
    "kfold6": SmoothKFold(6, 0.028),
    "elliptic": elliptic(0.5),
    "square": regularized_polygon(2, 1e-2),
    "bgn_random": BGN([[[2.0, 0.3], [0.3, 0.5]], [[1.0, -0.2], [-0.2, 0.8]]]),
}
METRIC = {
    "hyperbolic": MetricInduced(hyperbolic()),
    "cone": MetricInduced(Cone(np.sqrt(3.0))),
    "mountains": MetricInduced(TwoMountains(5.0, 1.0)),
}
ALL = {**SPACE_FREE, **METRIC}


def sample_z(name, n, rng):
    if name in SPACE_FREE:
        return np.zeros((n, 2))
    z = rng.uniform(-1.5, 2.5, size=(n, 2))
    if name == "hyperbolic":
        z[:, 0] = np.abs(z[:, 0]) + 0.2
    if name == "cone":
        z[:, 0] += 3.0
    return z


def fd_grad(f, x, h):
    g = np.zeros_like(x)
    for i in range(2):
        e = np.zeros_like(x)
        e[:, i] = h
        g[:, i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestExamples:
    def test_isotropic(self):
        jet = density_jet(Isotropic(), (0.3, 0.1), (3.0, 4.0))
        assert jet.value == pytest.approx(5.0)
        np.testing.assert_allclose(jet.grad_p, [0.6, 0.8])
        np.testing.assert_allclose(jet.grad_z, [0, 0])

    def test_kfold(self):
        assert density_jet(SmoothKFold(3, 0.124), None, (1.0, 0.0)).value == pytest.approx(1.124)

    def test_elliptic_minor_axis(self):
        model = BGN([np.diag([1.0, 0.25])])
        assert density_jet(model, None, (0.0, 1.0)).value == pytest.approx(0.5)

    def test_zero_direction(self):
        with pytest.raises(DomainError):
            density_jet(Isotropic(), None, (0.0, 0.0))
        with pytest.raises(DomainError):
            h_matrix(elliptic(), None, (0.0, 0.0))

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            density_jet(METRIC["hyperbolic"], (-1.0, 0.0), (1.0, 0.0))

    def test_phi_euclidean_metric(self):
        from acsf.metric import flat_graph

        jet = phi_jet(MetricInduced(flat_graph()), (0.4, -0.3), (1.5, 2.0))
        assert jet.value == pytest.approx(0.5 * (1.5**2 + 4.0))

    def test_phi_is_half_metric_norm(self):
        rng = np.random.default_rng(0)
        field = TwoMountains(5.0, 1.0)
        z = rng.uniform(-1, 2.5, size=(50, 2))
        p = rng.normal(size=(50, 2))
        G, _ = field.evaluate(z)
        np.testing.assert_allclose(
            phi_jet(MetricInduced(field), z, p).value, 0.5 * np.einsum("ni,nij,nj->n", p, G, p), rtol=1e-12
        )

    def test_phi_elliptic(self):
        jet = phi_jet(elliptic(0.5), None, (1.0, 2.0))
        assert jet.value == pytest.approx(0.5 * (4.0 + 0.25))
        np.testing.assert_allclose(jet.grad_p, [0.25, 2.0], rtol=1e-14)

    def test_phi_vanishes_at_zero(self):
        jet = phi_jet(elliptic(0.5), None, (0.0, 0.0))
        assert jet.value == 0
        np.testing.assert_array_equal(jet.grad_p, [0, 0])

    def test_h_isotropic(self):
        np.testing.assert_allclose(h_matrix(Isotropic(), None, (0.0, 2.0)), 4 * np.eye(2), rtol=1e-15)

    def test_h_elliptic(self):
        np.testing.assert_allclose(h_matrix(elliptic(0.5), None, (1.0, 0.0)), np.eye(2), atol=1e-15)

    def test_h_metric_closed_form(self):
        rng = np.random.default_rng(1)
        field = TwoMountains(5.0, 1.0)
        z = rng.uniform(-1, 2.5, size=(200, 2))
        p = rng.normal(size=(200, 2))
        H = h_matrix(MetricInduced(field), z, p)
        G, _ = field.evaluate(z)
        Gp = np.einsum("nij,nj->ni", G, p)
        sym = np.linalg.det(G) * np.einsum("ni,ni->n", Gp, p) ** 2 / np.einsum("ni,ni->n", Gp, Gp)
        np.testing.assert_allclose(H[:, 0, 0], sym, rtol=1e-12)
        np.testing.assert_allclose(H[:, 1, 1], sym, rtol=1e-12)

    def test_b_isotropic(self):
        model = BGN([np.eye(2)])
        np.testing.assert_allclose(b_matrix(model, (0.3, -1.2)), np.eye(2), rtol=1e-15)

    def test_b_at_zero(self):
        model = SPACE_FREE["bgn_random"]
        np.testing.assert_allclose(b_matrix(model, (0.0, 0.0)), 2 * model.tilde.sum(axis=0))

    def test_b_reproduces_phi_gradient(self):
        rng = np.random.default_rng(2)
        for model in (SPACE_FREE["bgn_random"], SPACE_FREE["square"], elliptic(0.3)):
            p = rng.normal(size=(100, 2))
            Bp = np.einsum("nij,nj->ni", b_matrix(model, p), p)
            np.testing.assert_allclose(Bp, phi_jet(model, None, p).grad_p, rtol=1e-12, atol=1e-14)

    def test_b_inequality(self):
        rng = np.random.default_rng(3)
        for model in (SPACE_FREE["bgn_random"], SPACE_FREE["square"], regularized_polygon(4, 1e-4)):
            p = rng.normal(size=(2000, 2))
            q = rng.normal(size=(2000, 2))
            q[:5] = 0.0
            B = b_matrix(model, q)
            lhs = np.einsum("nij,nj,ni->n", B, p, p - q)
            rhs = phi_jet(model, None, p).value - phi_jet(model, None, q).value
            assert np.all(lhs - rhs >= -1e-12 * (1 + np.abs(rhs)))

    def test_dual(self):
        assert dual(Isotropic(), (3.0, 4.0)) == pytest.approx(5.0, rel=1e-12)
        assert dual(elliptic(0.5), (0.0, 1.0)) == pytest.approx(2.0, rel=1e-10)
        assert dual(elliptic(0.5), (1.0, 0.0)) == pytest.approx(1.0, rel=1e-10)

    def test_dual_against_dense_grid(self):
        model = SmoothKFold(6, 0.028)
        t = W * np.arange(100_000) / 100_000
        P = np.column_stack([np.cos(t), np.sin(t)])
        g = model.gamma(None, P)
        for q in ([1.0, 0.0], [0.3, 0.7], [-0.5, 0.2]):
            brute = np.max(P @ np.array(q) / g)
            assert dual(model, q) == pytest.approx(brute, rel=1e-8)

    def test_wulff_of_elliptic_is_ellipse(self):
        pts = sample_wulff(elliptic(0.5), 360)
        np.testing.assert_allclose(pts[:, 0] ** 2 + (pts[:, 1] / 0.5) ** 2, 1.0, rtol=1e-9)

    @pytest.mark.parametrize("name", ["kfold6", "kfold3", "square"])
    def test_wulff_is_convex_closed_curve(self, name):
        pts = sample_wulff(SPACE_FREE[name], 720)
        e = np.roll(pts, -1, axis=0) - pts
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        assert np.all(cross > -1e-12)

    def test_frank_on_unit_level(self):
        model = SPACE_FREE["kfold3"]
        np.testing.assert_allclose(model.gamma(None, sample_frank(model, 100)), 1.0, rtol=1e-13)


class TestConvexity:
    def test_kfold_threshold(self):
        assert assert_convex(SmoothKFold(6, 0.028))
        res = assert_convex(SmoothKFold(6, 0.2))
        assert not res
        assert res.witness is not None

    @pytest.mark.parametrize("name", ["elliptic", "square", "bgn_random"])
    def test_bgn_convex(self, name):
        assert assert_convex(SPACE_FREE[name])

    def test_sampled_agrees_with_threshold(self):
        for delta in (0.02, 0.03):
            model = SmoothKFold(6, delta)
            t = W * np.arange(720) / 720
            P = np.column_stack([np.cos(t), np.sin(t)])
            c = np.einsum("ni,nij,nj->n", perp(P), model.jet(None, P).hess_p, perp(P))
            assert (c.min() > 0) == bool(assert_convex(model))

    def test_metric_needs_points(self):
        with pytest.raises(ValueError):
            assert_convex(METRIC["cone"])
        assert assert_convex(METRIC["cone"], z_samples=[[1.0, 1.0], [3.0, -2.0]])


@pytest.mark.parametrize("name", sorted(ALL))
class TestDerivativesAgainstDifferences:
    def test_gamma_p(self, name):
        rng = np.random.default_rng(10)
        model = ALL[name]
        z = sample_z(name, 30, rng)
        p = rng.normal(size=(30, 2))
        jet = model.jet(z, p)
        h = 1e-6 * np.max(np.abs(p))
        np.testing.assert_allclose(jet.grad_p, fd_grad(lambda q: model.gamma(z, q), p, h), rtol=1e-6, atol=1e-6)
        for i in range(2):
            col = fd_grad(lambda q: model.jet(z, q).grad_p[:, i], p, h)
            np.testing.assert_allclose(jet.hess_p[:, i], col, rtol=1e-6, atol=1e-5)

    def test_gamma_z(self, name):
        rng = np.random.default_rng(11)
        model = ALL[name]
        z = sample_z(name, 30, rng)
        p = rng.normal(size=(30, 2))
        jet = model.jet(z, p)
        np.testing.assert_allclose(jet.grad_z, fd_grad(lambda y: model.gamma(y, p), z, 1e-6), rtol=1e-6, atol=1e-6)
        for i in range(2):
            col = fd_grad(lambda y: model.jet(y, p).grad_p[:, i], z, 1e-6)
            np.testing.assert_allclose(jet.mixed[:, i], col, rtol=1e-6, atol=1e-6)

    def test_weight(self, name):
        rng = np.random.default_rng(12)
        model = ALL[name]
        z = sample_z(name, 30, rng)
        a, grad = model.weight(z)
        np.testing.assert_allclose(grad, fd_grad(lambda y: model.weight(y)[0], z, 1e-6), rtol=1e-6, atol=1e-7)

    def test_phi(self, name):
        rng = np.random.default_rng(13)
        model = ALL[name]
        z = sample_z(name, 30, rng)
        p = rng.normal(size=(30, 2))
        jet = phi_jet(model, z, p)
        val = lambda zz, pp: phi_jet(model, zz, pp).value
        np.testing.assert_allclose(jet.grad_p, fd_grad(lambda q: val(z, q), p, 1e-6), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(jet.grad_z, fd_grad(lambda y: val(y, p), z, 1e-6), rtol=1e-6, atol=1e-6)
        for i in range(2):
            col = fd_grad(lambda q: phi_jet(model, z, q).grad_p[:, i], p, 1e-6)
            np.testing.assert_allclose(jet.hess_p[:, i], col, rtol=1e-6, atol=1e-5)

    def test_homogeneity_identities(self, name):
        rng = np.random.default_rng(14)
        model = ALL[name]
        z = sample_z(name, 200, rng)
        p = rng.normal(size=(200, 2))
        lam = rng.uniform(0.01, 100.0, size=200)
        jet = model.jet(z, p)
        np.testing.assert_allclose(model.gamma(z, lam[:, None] * p), lam * model.gamma(z, p), rtol=1e-12)
        np.testing.assert_allclose(model.jet(z, lam[:, None] * p).grad_p, jet.grad_p, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(np.einsum("ni,ni->n", jet.grad_p, p), jet.value, rtol=1e-10)
        scale = np.linalg.norm(jet.hess_p, axis=(1, 2)) * np.linalg.norm(p, axis=1)
        assert np.all(np.linalg.norm(np.einsum("nij,nj->ni", jet.hess_p, p), axis=1) <= 1e-10 * scale)
        phi = phi_jet(model, z, p)
        np.testing.assert_allclose(np.einsum("ni,ni->n", phi.grad_p, p), 2 * phi.value, rtol=1e-10)
        np.testing.assert_allclose(np.einsum("nij,nj->ni", phi.hess_p, p), phi.grad_p, rtol=1e-10, atol=1e-10)
        # Phi_{p z_j} . p = 2 Phi_{z_j}
        for j in range(2):
            e = np.zeros((1, 2))
            e[0, j] = 1e-6
            d = (phi_jet(model, z + e, p).grad_p - phi_jet(model, z - e, p).grad_p) / 2e-6
            np.testing.assert_allclose(np.einsum("ni,ni->n", d, p), 2 * phi.grad_z[:, j], rtol=1e-5, atol=1e-6)

    def test_h_form_identity(self, name):
        rng = np.random.default_rng(15)
        model = ALL[name]
        z = sample_z(name, 500, rng)
        p = rng.normal(size=(500, 2))
        w = rng.normal(size=(500, 2))
        H = h_matrix(model, z, p)
        assert np.allclose(H[:, 0, 0], H[:, 1, 1], rtol=0, atol=0)
        assert np.allclose(H[:, 0, 1], -H[:, 1, 0], rtol=0, atol=0)
        jet = model.jet(z, perp(p))
        a, _ = model.weight(z)
        rhs = (a * jet.value) ** 2 * np.sum(w * w, axis=1) / np.sum(jet.grad_p**2, axis=1)
        np.testing.assert_allclose(np.einsum("ni,nij,nj->n", w, H, w), rhs, rtol=1e-12)


@pytest.mark.parametrize("name", ["isotropic", "kfold6", "elliptic", "square", "bgn_random"])
@settings(max_examples=60, deadline=None)
@given(
    st.floats(0, 2 * np.pi),
    st.floats(0.1, 3.0),
    st.floats(0, 2 * np.pi),
    st.floats(0.1, 3.0),
)
def test_phi_convexity_surrogate(name, t1, r1, t2, r2):
    model = SPACE_FREE[name]
    p = r1 * np.array([np.cos(t1), np.sin(t1)])
    q = r2 * np.array([np.cos(t2), np.sin(t2)])
    # keep the segment [p, q] away from the origin
    d = q - p
    s = np.clip(-np.dot(p, d) / np.dot(d, d), 0, 1) if np.dot(d, d) > 1e-12 else 0.0
    if np.linalg.norm(p + s * (q - p)) < 0.05:
        return
    jp, jq = phi_jet(model, None, p), phi_jet(model, None, q)
    assert jq.value - jp.value - np.dot(jp.grad_p, q - p) >= -1e-12


class TestAnisotropicCurvature:
    def circle(self, J, r=0.7):
        return interpolate(lambda s: r * np.column_stack([np.cos(W * s), np.sin(W * s)]), J)

    def test_isotropic_circle(self):
        errs = [np.max(np.abs(anisotropic_curvature(Isotropic(), self.circle(J)) - 1 / 0.7)) for J in (32, 64)]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
        assert errs[1] < 5e-3

    def test_wulff_flow_residual(self):
        # shrinking Wulff boundary: normal velocity equals gamma_0(nu) kappa_gamma
        model = elliptic(0.5)
        t = 0.1
        s = np.sqrt(1 - 2 * t)
        J = 512
        x = lambda r: s * np.column_stack([np.cos(W * r), 0.5 * np.sin(W * r)])
        curve = interpolate(x, J)
        X = curve.positions
        kap = anisotropic_curvature(model, curve)
        tau = np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)
        nu = perp(tau / np.linalg.norm(tau, axis=1)[:, None])
        V = np.einsum("ni,ni->n", -X / (1 - 2 * t), nu)  # x_t = -x / (1 - 2t)
        g = model.gamma(None, nu)
        np.testing.assert_allclose(V, g * kap, rtol=1e-4)
