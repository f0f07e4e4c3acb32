import math

import numpy as np
import pytest
from scipy.integrate import quad

from nlslab.grid import RadialField
from nlslab.nonlinearity import (FOURIER_CONVENTION, InvalidProfileError,
                                 NonlinearitySpec, apply_F1, apply_F2,
                                 check_H2, check_H2prime,
                                 effective_potentials, evaluate_g,
                                 fourier_l1_functional, radial_fourier)


class TestSpec:
    def test_exponent_range(self):
        NonlinearitySpec(0.1, 2.9, -1.0, 0.2)
        for a1, a2 in ((0.0, 1.0), (1.5, 1.0), (1.0, 3.0), (-0.5, 1.0)):
            with pytest.raises(ValueError):
                NonlinearitySpec(a1, a2, -1.0, 0.0)

    def test_g2_bound_by_sampling(self):
        spec = NonlinearitySpec(0.4, 1.7, -0.8, 0.3)
        C = spec.g2_bound_constant()
        s = np.geomspace(1e-6, 10.0, 500)
        # |g''| for the two-power family, term by term
        g2 = np.abs(
            (2 + spec.alpha1) * (1 + spec.alpha1) * spec.lambda1 * s**spec.alpha1
            + (2 + spec.alpha2) * (1 + spec.alpha2) * spec.lambda2 * s**spec.alpha2)
        assert np.all(g2 <= C * (s**spec.alpha1 + s**spec.alpha2) * (1 + 1e-12))


class TestEvaluateG:
    def test_zero(self, cubic):
        assert evaluate_g(0.0, cubic) == 0.0

    def test_cubic_value(self):
        spec = NonlinearitySpec(1.0, 1.0, -1.0, 0.0)
        assert evaluate_g(2.0, spec) == pytest.approx(-8.0, abs=1e-14)

    def test_oddness(self, cubic):
        s = np.linspace(-3, 3, 11)
        assert np.allclose(evaluate_g(-s, cubic), -evaluate_g(s, cubic), atol=1e-14)

    def test_gauge_symmetry(self):
        spec = NonlinearitySpec(0.3, 1.4, -1.0, 0.25)
        rng = np.random.default_rng(1)
        for _ in range(10):
            z = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
            th = rng.uniform(0, 2 * np.pi)
            lhs = evaluate_g(np.exp(1j * th) * z, spec)
            rhs = np.exp(1j * th) * evaluate_g(z, spec)
            assert abs(lhs - rhs) <= 1e-14 * max(abs(lhs), 1.0)


@pytest.fixture(scope="module")
def psi_profile(grid):
    # smooth positive branch-like profile
    return RadialField.from_u(grid, (0.05 * np.exp(-grid.r**2 / 6)).astype(complex))


class TestF1:
    def test_rotation_generator(self, psi_profile, cubic):
        # Dg_psi[i psi] = i g(psi)
        g = psi_profile.grid
        out = apply_F1(psi_profile, RadialField(g, 1j * psi_profile.w), cubic)
        expected = 1j * evaluate_g(psi_profile.u, cubic) * g.r
        assert g.l2_w(out.w - expected) < 1e-12 * g.l2_w(expected)

    def test_linearity_zero(self, psi_profile, cubic):
        g = psi_profile.grid
        out = apply_F1(psi_profile, RadialField(g, np.zeros(g.node_count, complex)), cubic)
        assert g.l2_w(out.w) == 0.0

    def test_centered_difference_oracle_with_richardson(self, psi_profile):
        # oracle: (g(psi + eps z) - g(psi - eps z)) / (2 eps), halving eps
        spec = NonlinearitySpec(1.0, 2.2, -1.0, 0.4)
        g = psi_profile.grid
        rng = np.random.default_rng(7)
        z = RadialField(g, (rng.standard_normal(g.node_count)
                            + 1j * rng.standard_normal(g.node_count))
                        * np.exp(-g.r**2 / 8) * g.r * 0.05)
        got = apply_F1(psi_profile, z, spec).w

        def fd(eps):
            gp = evaluate_g(psi_profile.u + eps * z.u, spec)
            gm = evaluate_g(psi_profile.u - eps * z.u, spec)
            return (gp - gm) / (2 * eps) * g.r

        e1 = g.l2_w(got - fd(1e-5))
        e2 = g.l2_w(got - fd(5e-6))
        scale = g.l2_w(got)
        assert e1 < 1e-8 * scale
        # O(eps^2) confirmation: halving the step shrinks the defect ~4x
        assert 2.5 < e1 / e2 < 6.0

    def test_gauge_equivariance(self, psi_profile):
        spec = NonlinearitySpec(0.5, 1.5, -1.0, 0.3)
        g = psi_profile.grid
        rng = np.random.default_rng(8)
        z = RadialField(g, (rng.standard_normal(g.node_count)
                            + 1j * rng.standard_normal(g.node_count)) * g.r
                        * np.exp(-g.r**2 / 10))
        th = 1.234
        rot_psi = RadialField(g, np.exp(1j * th) * psi_profile.w)
        rot_z = RadialField(g, np.exp(1j * th) * z.w)
        lhs = apply_F1(rot_psi, rot_z, spec).w
        rhs = np.exp(1j * th) * apply_F1(psi_profile, z, spec).w
        assert g.l2_w(lhs - rhs) < 1e-12 * g.l2_w(rhs)

    def test_real_linear_not_complex_linear(self, psi_profile, cubic):
        # F1(i z) != i F1(z) whenever g_ubar != 0 (true for the cubic)
        g = psi_profile.grid
        z = RadialField(g, (np.exp(-g.r**2 / 8) * g.r).astype(complex))
        a = apply_F1(psi_profile, RadialField(g, 1j * z.w), cubic).w
        b = 1j * apply_F1(psi_profile, z, cubic).w
        assert g.l2_w(a - b) > 1e-3 * g.l2_w(b)
        _, g_ubar = effective_potentials(psi_profile.u, cubic)
        assert np.max(np.abs(g_ubar)) > 0

    def test_effective_potential_pointwise_bound(self, psi_profile):
        spec = NonlinearitySpec(0.5, 1.5, -1.0, 0.3)
        m = np.abs(psi_profile.u)
        g_u, g_ubar = effective_potentials(psi_profile.u, spec)
        C = (2 + spec.alpha2) * (abs(spec.lambda1) + abs(spec.lambda2))
        bound = C * (m ** (1 + spec.alpha1) + m ** (1 + spec.alpha2))
        assert np.all(np.abs(g_u) <= bound * (1 + 1e-12))
        assert np.all(np.abs(g_ubar) <= bound * (1 + 1e-12))


class TestF2:
    def test_zero_eta(self, psi_profile, cubic):
        g = psi_profile.grid
        out = apply_F2(psi_profile, RadialField(g, np.zeros(g.node_count, complex)),
                       cubic)
        assert g.l2_w(out.w) == 0.0

    def test_quadratic_smallness(self, psi_profile, cubic):
        # ||F2(psi, s eta)||_2 / s^2 bounded: log-log slope >= 2
        g = psi_profile.grid
        eta = RadialField(g, (np.exp(-((g.r - 3) ** 2) / 4) * g.r).astype(complex))
        ss = np.geomspace(1e-4, 1e-2, 7)
        norms = [g.l2_w(apply_F2(psi_profile, RadialField(g, s * eta.w), cubic).w)
                 for s in ss]
        slope = np.polyfit(np.log(ss), np.log(norms), 1)[0]
        assert slope >= 2.0 - 1e-3

    def test_cubic_closed_form_oracle(self, grid):
        # oracle: for g(s) = lam s^3 and real psi, eta:
        # F2 = lam ((psi+eta)^3 - psi^3 - 3 psi^2 eta) = lam (3 psi eta^2 + eta^3)
        lam = -1.0
        spec = NonlinearitySpec(1.0, 1.0, lam, 0.0)
        psi = RadialField.from_u(grid, (0.1 * np.exp(-grid.r**2 / 5)).astype(complex))
        eta = RadialField.from_u(grid, (0.03 * np.exp(-((grid.r - 2) ** 2) / 3)
                                        ).astype(complex))
        got = apply_F2(psi, eta, spec).u
        oracle = lam * (3 * psi.u * eta.u**2 + eta.u**3)
        assert np.max(np.abs(got - oracle)) < 1e-12 * np.max(np.abs(oracle))


class TestH2:
    def test_gaussian_profile_closed_form(self, grid):
        # W = g'(psi) = 3|lam| s^2 e^{-r^2} for psi = s e^{-r^2/2}:
        # J(W) = 3 |lam| s^2 exactly (Gaussian transform is positive)
        s = 0.05
        spec = NonlinearitySpec(1.0, 1.0, -1.0, 0.0)
        psi = RadialField.from_u(grid, (s * np.exp(-grid.r**2 / 2)).astype(complex))
        rep = check_H2(psi, spec)
        assert rep["finite"]
        assert rep["l1_norm_gprime_hat"] == pytest.approx(3 * s**2, rel=1e-6)
        assert rep["l1_norm_gratio_hat"] == pytest.approx(s**2, rel=1e-6)

    def test_transform_against_quadrature_oracle(self, grid):
        # oracle: adaptive quadrature of (4 pi / k) int sin(kr) W(r) r dr
        W = np.exp(-grid.r**2)
        ks = np.array([0.3, 1.0, 2.7])
        got = radial_fourier(grid, W, ks)
        for k, gk in zip(ks, got):
            oracle = 4 * np.pi / k * quad(
                lambda r: math.sin(k * r) * math.exp(-r**2) * r, 0, 25)[0]
            assert gk == pytest.approx(oracle, rel=1e-8)

    def test_smooth_power_finite(self, grid, spectral, cubic):
        from nlslab.branch import solve_branch_point
        spec2 = NonlinearitySpec(2.0, 2.0, -1.0, 0.0)
        bp = solve_branch_point(0.01, spectral, spec2)
        rep = check_H2(RadialField(grid, bp.psi_real.astype(complex)), spec2)
        assert rep["finite"]

    def test_fractional_alpha_finite(self, grid, spectral):
        from nlslab.branch import solve_branch_point
        spec = NonlinearitySpec(0.3, 1.0, -1.0, 0.0)
        bp = solve_branch_point(0.01, spectral, spec)
        rep = check_H2(RadialField(grid, bp.psi_real.astype(complex)), spec)
        assert rep["finite_gprime"] and rep["finite_gratio"]

    def test_rejects_sign_indefinite_profile(self, grid, cubic):
        u = np.sin(grid.r / 5) * np.exp(-grid.r**2 / 20)
        with pytest.raises(InvalidProfileError):
            check_H2(RadialField.from_u(grid, u.astype(complex)), cubic)

    def test_convention_reported(self, grid, cubic):
        psi = RadialField.from_u(grid, (0.05 * np.exp(-grid.r**2 / 2)).astype(complex))
        rep = check_H2(psi, cubic)
        assert rep["convention"] == FOURIER_CONVENTION


def test_H2prime_sampling():
    for spec in (NonlinearitySpec(1.0, 1.0, -1.0, 0.0),
                 NonlinearitySpec(0.3, 1.8, -0.7, 0.2)):
        rep = check_H2prime(spec, s_max=2.0)
        assert rep["ok"]
