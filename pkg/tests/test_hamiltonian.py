import math
import warnings

import numpy as np
import pytest
from scipy.linalg import eigh, solve

from nlslab.grid import RadialField, RadialGrid, lp_norm
from nlslab.hamiltonian import (NearSingularResolventError,
                                OneBoundStateRequiredError, PotentialSpec,
                                SpectralData, apply_H, apply_resolvent,
                                build_spectral, free_gaussian,
                                hamiltonian_diagonals,
                                kato_smoothing_constant,
                                negative_eigenvalue_count, project_continuous,
                                propagate_H, propagate_free,
                                resolvent_tridiagonal,
                                tune_depth_one_bound_state)


def dense_H(V, g):
    n = g.node_count
    diag, off = hamiltonian_diagonals(V, g)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


class TestPotential:
    def test_tail_fit_rho_exceeds_3(self, grid):
        for shape, width in (("gaussian_well", 2.0), ("exponential_well", 1.5)):
            rho = PotentialSpec(shape, 2.0, width).tail_fit_rho(grid)
            assert rho > 3.0

    def test_real_and_attractive(self, grid):
        v = PotentialSpec("gaussian_well", 2.0, 2.0).values(grid)
        assert np.isrealobj(v) and np.all(v <= 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            PotentialSpec("square_well", 1.0, 1.0)
        with pytest.raises(ValueError):
            PotentialSpec("gaussian_well", -1.0, 1.0)


class TestBuildSpectral:
    def test_free_laplacian_has_no_bound_state(self, grid):
        with pytest.raises(OneBoundStateRequiredError):
            build_spectral(PotentialSpec("gaussian_well", 0.0, 2.0), grid)

    def test_tuned_well_matches_dense_oracle(self, coarse_grid):
        pot = tune_depth_one_bound_state(coarse_grid)
        S = build_spectral(pot, coarse_grid)
        # oracle: dense symmetric eigensolve
        evals = eigh(dense_H(pot, coarse_grid), eigvals_only=True)
        assert int(np.sum(evals < 0)) == 1
        assert abs(S.ground_energy - evals[0]) < 1e-10

    def test_deep_well_has_multiple_bound_states(self, coarse_grid):
        pot = tune_depth_one_bound_state(coarse_grid)
        deep = PotentialSpec(pot.shape, 10.0 * pot.depth, pot.width)
        with pytest.raises(OneBoundStateRequiredError):
            build_spectral(deep, coarse_grid)
        evals = eigh(dense_H(deep, coarse_grid), eigvals_only=True)
        assert int(np.sum(evals < 0)) >= 2

    def test_ground_state_positive_normalized(self, spectral):
        g = spectral.grid
        assert np.all(spectral.psi0.w.real > 0)
        assert abs(g.inner_w(spectral.psi0.w, spectral.psi0.w) - 1) < 1e-12
        assert spectral.ground_energy < 0

    def test_eigenvector_orthonormality(self, spectral):
        g = spectral.grid
        psi0_w = spectral.psi0.w
        for k in (1, 5, 100, 2000):
            ek = spectral.eigenvectors[:, k] / math.sqrt(4 * np.pi * g.dr)
            assert abs(g.inner_w(psi0_w, ek)) < 1e-12

    def test_resonance_diagnostic_warns_near_second_threshold(self, coarse_grid):
        base = tune_depth_one_bound_state(coarse_grid, fraction=0.9999)
        with pytest.warns(RuntimeWarning, match="resonance"):
            build_spectral(base, coarse_grid)


class TestProjection:
    def test_kills_ground_state(self, spectral):
        out = project_continuous(spectral.psi0, spectral)
        assert spectral.grid.l2_w(out.w) < 1e-12

    def test_preserves_orthogonal_field(self, spectral):
        g = spectral.grid
        f = RadialField.from_u(g, (g.r * np.exp(-g.r**2 / 3)).astype(complex))
        f = project_continuous(f, spectral)
        again = project_continuous(f, spectral)
        assert g.l2_w(again.w - f.w) < 1e-12 * g.l2_w(f.w)

    def test_idempotent_on_random_fields(self, spectral):
        g = spectral.grid
        rng = np.random.default_rng(2)
        w = rng.standard_normal(g.node_count) + 1j * rng.standard_normal(g.node_count)
        f1 = project_continuous(RadialField(g, w), spectral)
        f2 = project_continuous(f1, spectral)
        assert g.l2_w(f2.w - f1.w) < 1e-12 * g.l2_w(f1.w)


class TestResolvent:
    def test_annihilates_ground_state(self, spectral):
        out = apply_resolvent(spectral.psi0, -0.1, spectral)
        assert spectral.grid.l2_w(out.w) < 1e-12

    def test_inverse_consistency_at_E0(self, spectral):
        g = spectral.grid
        rng = np.random.default_rng(3)
        w = rng.standard_normal(g.node_count) + 1j * rng.standard_normal(g.node_count)
        f = RadialField(g, w)
        res = apply_resolvent(f, spectral.ground_energy, spectral)
        back = apply_H(res, spectral).w - spectral.ground_energy * res.w
        pcf = project_continuous(f, spectral).w
        assert g.l2_w(back - pcf) < 1e-10 * g.l2_w(pcf)

    def test_against_dense_solve_oracle(self, coarse_spectral):
        S = coarse_spectral
        g = S.grid
        rng = np.random.default_rng(4)
        w = rng.standard_normal(g.node_count)
        f = RadialField(g, w.astype(complex))
        E = 0.5 * S.ground_energy
        got = apply_resolvent(f, E, S).w
        # oracle: dense solve of (H - E) on the psi0-complement
        H = dense_H(S.potential, g)
        pcf = project_continuous(f, S).w.real
        x = solve(H - E * np.eye(g.node_count), pcf)
        x -= g.inner_w(S.psi0.w, x).real * S.psi0.w.real
        assert g.l2_w(got - x) < 1e-9 * g.l2_w(x)

    def test_tridiagonal_path_matches_eigenbasis(self, spectral):
        g = spectral.grid
        rng = np.random.default_rng(5)
        f = RadialField(g, rng.standard_normal(g.node_count).astype(complex))
        E = 0.7 * spectral.ground_energy
        a = apply_resolvent(f, E, spectral).w
        b = resolvent_tridiagonal(f, E, spectral).w
        assert g.l2_w(a - b) < 1e-9 * g.l2_w(a)

    def test_near_singular_error(self, spectral):
        f = spectral.psi0
        E_cont = float(spectral.eigenvalues[10])
        with pytest.raises(NearSingularResolventError):
            apply_resolvent(f, E_cont + 1e-13, spectral)


class TestPropagators:
    def test_identity_at_t0(self, spectral):
        out = propagate_H(spectral.psi0, 0.0, spectral)
        assert spectral.grid.l2_w(out.w - spectral.psi0.w) < 1e-13

    def test_unitarity(self, spectral):
        g = spectral.grid
        rng = np.random.default_rng(6)
        f = RadialField(g, rng.standard_normal(g.node_count)
                        + 1j * rng.standard_normal(g.node_count))
        out = propagate_H(f, 17.3, spectral)
        assert abs(g.l2_w(out.w) - g.l2_w(f.w)) < 1e-12 * g.l2_w(f.w)

    def test_ground_state_phase(self, spectral):
        t = 3.7
        out = propagate_H(spectral.psi0, t, spectral)
        expected = np.exp(-1j * spectral.ground_energy * t) * spectral.psi0.w
        assert spectral.grid.l2_w(out.w - expected) < 1e-12

    def test_free_gaussian_closed_form(self):
        # spreading factor 1 + 2it for e^{i Delta t} acting on e^{-r^2/2};
        # R = 180 keeps |t| <= 20 boundary-clean at the 1e-6 level
        g = RadialGrid(3071, 180.0)
        u0 = RadialField.from_u(g, np.exp(-g.r**2 / 2).astype(complex))
        for t in (5.0, 20.0, -20.0):
            got = propagate_free(u0, t)
            ref = free_gaussian(g, t)
            assert np.max(np.abs(got.w - ref.w) / g.r) < 1e-6, f"t = {t}"

    def test_free_identity_at_t0(self, grid):
        f = RadialField.from_u(grid, np.exp(-grid.r**2 / 2).astype(complex))
        out = propagate_free(f, 0.0)
        assert grid.l2_w(out.w - f.w) < 1e-13

    def test_free_gaussian_sup_decay_slope(self):
        # sup-norm of the free Gaussian decays with log-log slope -3/2 (+-5%)
        g = RadialGrid(6143, 360.0)
        u0 = RadialField.from_u(g, np.exp(-g.r**2 / 2).astype(complex))
        ts = np.linspace(5.0, 40.0, 15)
        sups = [lp_norm(propagate_free(u0, t), math.inf) for t in ts]
        slope = np.polyfit(np.log(ts), np.log(sups), 1)[0]
        assert abs(-slope - 1.5) < 0.05 * 1.5


class TestDecayInvariants:
    @pytest.fixture(scope="class")
    def bump_coefs(self, spectral):
        g = spectral.grid
        u = np.exp(-(((g.r - 4.0) / 2.5) ** 2)).astype(complex)
        f = project_continuous(RadialField.from_u(g, u), spectral)
        return spectral.to_eigenbasis(f.w), f

    def _evolved(self, spectral, c0, t):
        return spectral.from_eigenbasis(c0 * np.exp(-1j * spectral.eigenvalues * t))

    def test_unweighted_sup_decay(self, spectral, bump_coefs):
        g = spectral.grid
        c0, f = bump_coefs
        l1 = float(np.sum(g.quadrature_weights * np.abs(f.u)))
        ts = np.linspace(5.0, 36.0, 24)
        vals = []
        for t in ts:
            u = np.abs(self._evolved(spectral, c0, t)) / g.r
            vals.append(float(np.sum(g.quadrature_weights * u**64) ** (1 / 64)) / l1)
        slope = -np.polyfit(np.log(ts), np.log(vals), 1)[0]
        assert abs(slope - 1.5) < 0.15

    def test_weighted_decay(self, spectral, bump_coefs):
        g = spectral.grid
        c0, f = bump_coefs
        wgt = (1.0 + g.r**2) ** (-2.0)
        ts = np.linspace(5.0, 36.0, 24)
        vals = []
        for t in ts:
            u = np.abs(self._evolved(spectral, c0, t)) / g.r
            vals.append(math.sqrt(float(np.sum(g.quadrature_weights * (wgt * u) ** 2))))
        slope = -np.polyfit(np.log(1 + ts), np.log(vals), 1)[0]
        assert abs(slope - 1.5) < 0.2

    def test_kato_smoothing_stable_under_T_doubling(self, spectral, bump_coefs):
        _, f = bump_coefs
        c1 = kato_smoothing_constant(spectral, f, 10.0)
        c2 = kato_smoothing_constant(spectral, f, 20.0)
        c4 = kato_smoothing_constant(spectral, f, 40.0)
        assert c2 <= 1.1 * c1 + 1e-12
        assert c4 <= 1.1 * c2 + 1e-12
