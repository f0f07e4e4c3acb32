import math

import numpy as np
import pytest

from nlslab.branch import BranchPoint, solve_branch_point
from nlslab.dynamics import EvolverConfig, evolve_nls
from nlslab.grid import RadialField, lp_norm
from nlslab.hamiltonian import project_continuous
from nlslab.modulation import (DecompositionFailedError,
                               JacobiDegenerateError, Psi0InHaError,
                               apply_Ra, calibrate_decomposition_radius,
                               decompose, ha_defects, modulation_rhs,
                               pairing_vectors)
from nlslab.nonlinearity import apply_F2
from nlslab.rng import SplitMix64


def random_small_field(g, rng, norm):
    width = 1.0 + 3.0 * rng.uniform()
    center = 8.0 * rng.uniform()
    prof = np.exp(-(((g.r - center) / width) ** 2))
    w = (prof * (rng.uniform() - 0.5) + 1j * prof * (rng.uniform() - 0.5)) * g.r
    return w * (norm / g.l2_w(w))


class TestDecompose:
    def test_exact_branch_point(self, branch_ctx, bp_small, spectral):
        g = spectral.grid
        dc = decompose(RadialField(g, bp_small.psi_E.w.copy()), branch_ctx)
        assert abs(dc.a - 0.01) < 1e-11
        assert g.l2_w(dc.eta.w) < 1e-11

    def test_gauge_covariance(self, branch_ctx, spectral):
        g = spectral.grid
        rng = SplitMix64(21)
        w = random_small_field(g, rng, 0.008)
        dc0 = decompose(RadialField(g, w), branch_ctx)
        th = 0.8
        dc1 = decompose(RadialField(g, np.exp(1j * th) * w), branch_ctx)
        assert abs(dc1.a - np.exp(1j * th) * dc0.a) < 1e-10
        assert g.l2_w(dc1.eta.w - np.exp(1j * th) * dc0.eta.w) < 1e-10 * g.l2_w(w)

    def test_bump_in_Ha_recovered(self, branch_ctx, bp_small, spectral):
        # construct eta in H_{a*} by explicit Gram-Schmidt against the two
        # pairing vectors under the real inner product
        g = spectral.grid
        p1, p2 = pairing_vectors(bp_small)
        bump = (np.exp(-(((g.r - 5.0) / 2.0) ** 2)) * (1 + 0.4j)) * g.r
        for p in (p1, p2):
            # real-orthogonalize: subtract Re<p, bump>/Re<p, p> p
            bump = bump - (g.inner_w(p, bump).real / g.inner_w(p, p).real) * p
        d1, d2 = ha_defects(bp_small, bump)
        assert max(abs(d1), abs(d2)) < 1e-10 * g.l2_w(bump)
        eps = 1e-3
        eta = eps * bump / g.l2_w(bump)
        dc = decompose(RadialField(g, bp_small.psi_E.w + eta), branch_ctx)
        assert abs(dc.a - 0.01) < 50 * eps**2     # a recovered to O(eps^2)
        assert g.l2_w(dc.eta.w - eta) < 1e-8 * eps

    def test_round_trip_property(self, branch_ctx, spectral):
        g = spectral.grid
        rng = SplitMix64(33)
        for _ in range(8):
            a = 0.006 + 0.006 * rng.uniform()
            bp = branch_ctx.point_at(a)
            eta = random_small_field(g, rng, 2e-3)
            p1, p2 = pairing_vectors(bp)
            for p in (p1, p2):
                eta = eta - (g.inner_w(p, eta).real / g.inner_w(p, p).real) * p
            dc = decompose(RadialField(g, bp.psi_E.w + eta), branch_ctx)
            assert abs(dc.a - a) < 1e-8
            assert g.l2_w(dc.eta.w - eta) < 1e-8

    def test_norm_control_over_ensemble(self, branch_ctx, spectral):
        g = spectral.grid
        rng = SplitMix64(42)
        worst_iters = 0
        worst_C = 0.0
        for _ in range(60):
            w = random_small_field(g, rng, 0.01 * (0.2 + 0.8 * rng.uniform()))
            nphi = g.l2_w(w)
            dc = decompose(RadialField(g, w), branch_ctx)
            assert abs(dc.a) <= 2.0 * nphi
            worst_C = max(worst_C, g.l2_w(dc.eta.w) / nphi)
            worst_iters = max(worst_iters, dc.newton_iterations)
            rec = dc.branch_point.psi_E.w + dc.eta.w
            assert g.l2_w(rec - w) <= 1e-10 * nphi
            d1, d2 = ha_defects(dc.branch_point, dc.eta.w)
            scale = g.l2_w(dc.eta.w) * g.l2_w(dc.branch_point.d_psi_da1.w)
            assert max(abs(d1), abs(d2)) <= 1e-10 * max(scale, 1e-30)
        assert worst_C <= 5.0
        assert worst_iters <= 8

    def test_norm_cap(self, branch_ctx, spectral):
        g = spectral.grid
        rng = SplitMix64(5)
        w = random_small_field(g, rng, 0.1)
        with pytest.raises(DecompositionFailedError):
            decompose(RadialField(g, w), branch_ctx, delta1=0.02)

    def test_calibration_routine_smoke(self, branch_ctx):
        cap = calibrate_decomposition_radius(branch_ctx, SplitMix64(9),
                                             trials=25, start=0.02)
        assert cap >= 0.005


class TestRa:
    @pytest.fixture(scope="class")
    def zeta(self, spectral):
        g = spectral.grid
        f = RadialField.from_u(g, (np.exp(-(((g.r - 3.0) / 2.0) ** 2))
                                   * (1 + 0.3j)).astype(complex))
        f = project_continuous(f, spectral)
        f.w /= g.l2_w(f.w)
        return f

    def test_identity_at_zero(self, branch_ctx, zeta, spectral):
        out = apply_Ra(zeta, 0.0, branch_ctx)
        assert spectral.grid.l2_w(out.w - zeta.w) < 1e-12

    def test_pc_inverse(self, branch_ctx, zeta, spectral):
        g = spectral.grid
        out = apply_Ra(zeta, 0.01, branch_ctx)
        assert g.l2_w(project_continuous(out, spectral).w - zeta.w) < 1e-12

    def test_range_in_Ha(self, branch_ctx, zeta, spectral):
        g = spectral.grid
        out = apply_Ra(zeta, 0.01, branch_ctx)
        bp = branch_ctx.point_at(0.01)
        d1, d2 = ha_defects(bp, out.w)
        assert max(abs(d1), abs(d2)) < 1e-10

    def test_conjugation_commutes(self, branch_ctx, zeta, spectral):
        g = spectral.grid
        out = apply_Ra(zeta, 0.01, branch_ctx)
        out_c = apply_Ra(RadialField(g, np.conj(zeta.w)), 0.01, branch_ctx)
        assert g.l2_w(np.conj(out.w) - out_c.w) < 1e-12

    def test_lp_operator_bounds_stable(self, branch_ctx, zeta, spectral):
        # ||R_a zeta||_p / ||zeta||_p stable within 10% across |a| <= 0.02
        for p in (2.0, 4.0, 6.0):
            ratios = []
            for a in (0.0, 0.005, 0.01, 0.02):
                out = apply_Ra(zeta, a, branch_ctx)
                ratios.append(lp_norm(out, p) / lp_norm(zeta, p))
            assert max(ratios) <= 1.1 * min(ratios)
            assert max(ratios) < 3.0

    def test_requires_H0(self, branch_ctx, spectral):
        g = spectral.grid
        with pytest.raises(ValueError):
            apply_Ra(spectral.psi0, 0.01, branch_ctx)


class TestModulationRhs:
    def test_zero_eta(self, bp_small, cubic, spectral):
        g = spectral.grid
        b1, b2, b = modulation_rhs(
            bp_small, RadialField(g, np.zeros(g.node_count, complex)), cubic)
        assert b1 == 0.0 and b2 == 0.0 and b == 0.0

    def test_quadratic_scaling(self, bp_small, cubic, spectral):
        g = spectral.grid
        eta = RadialField(g, (np.exp(-(((g.r - 4.0) / 2.0) ** 2)) * (1 + 1j)) * g.r)
        eta.w /= g.l2_w(eta.w)
        vals = []
        ss = np.geomspace(1e-4, 1e-2, 5)
        for s in ss:
            _, _, b = modulation_rhs(bp_small, RadialField(g, s * eta.w), cubic)
            vals.append(b)
        slope = np.polyfit(np.log(ss), np.log(vals), 1)[0]
        assert slope >= 2.0 - 1e-3
        assert vals[0] / ss[0] ** 2 < 10 * vals[-1] / ss[-1] ** 2

    def test_jacobi_degenerate_error(self, bp_small, cubic, spectral):
        g = spectral.grid
        crippled = BranchPoint(
            a=bp_small.a, E=bp_small.E, h=bp_small.h, psi_E=bp_small.psi_E,
            d_psi_da1=RadialField(g, 0.1 * bp_small.d_psi_da1.w),
            d_psi_da2=RadialField(g, 0.1 * bp_small.d_psi_da2.w),
            dE_dabs=bp_small.dE_dabs, residual=0.0, iterations=0,
            contraction=0.0, psi_real=bp_small.psi_real,
            dpsi_dabs=bp_small.dpsi_dabs)
        eta = RadialField(g, (np.exp(-g.r**2 / 9) * g.r).astype(complex))
        with pytest.raises(JacobiDegenerateError):
            modulation_rhs(crippled, eta, cubic)

    def test_amplitude_ode_consistency(self, spectral, cubic, branch_ctx):
        # |a' + iEa| = sqrt(beta1^2 + beta2^2) pointwise along a trajectory:
        # differencing A(t) = a e^{i int E} removes the fast phase, so the
        # stride-level derivative resolves the slow modulation magnitude
        g = spectral.grid
        bp = solve_branch_point(0.01, spectral, cubic)
        # low-frequency radiation so the stride-level derivative resolves the
        # F2-driven beat (frequencies ~ 2 k^2 of the bump's band)
        pert = project_continuous(RadialField.from_u(
            g, np.exp(-(((g.r - 5.0) / 4.0) ** 2)).astype(complex)), spectral)
        pert.w *= 3e-2 / g.l2_w(pert.w)
        u0 = RadialField(g, bp.psi_E.w + pert.w)
        cfg = EvolverConfig(dt=0.0025, t_final=6.0, record_stride=4)
        rec = evolve_nls(u0, cfg, spectral, cubic, branch=branch_ctx)
        A = rec.a * np.exp(1j * rec.phase_integral)
        dA = np.abs(np.gradient(A, rec.times))
        b = np.hypot(rec.beta1, rec.beta2)
        msk = (rec.times > 1.0) & (rec.times < 5.0)
        rel = np.abs(dA[msk] - b[msk]) / b[msk]
        assert np.max(rel) < 0.05
