"""Modulation machinery: the unique splitting phi = psi_E(a) + eta, eta in H_a.

H_a is the real-orthogonal complement of the dual zero-mode pair

    phi1 = -i d psi_E/d a2,    phi2 = i d psi_E/d a1,

which removes the non-decaying tangent directions of the linearization from
the radiation. The amplitude solves the 2D real root problem

    F(a1, a2; phi) = ( Re<phi1, phi - psi_E>, Re<phi2, phi - psi_E> ) = 0

by Newton iteration started from the bifurcation-point projection
a0 = <psi0, phi>. The leading Jacobian block is analytic (the pairings
Re<phi_i, d_j psi>, a near-identity diagonal for small |a|); the eta-coupled
correction is picked up by a finite-difference re-assembly only if the
analytic step stalls.

R_a inverts P_c restricted to H_a by adding the unique psi0 multiple that
restores both orthogonality defects (a 2x2 real system in Re z, Im z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nlslab.branch import Branch, BranchPoint
from nlslab.grid import RadialField
from nlslab.nonlinearity import apply_F2

DELTA1_DEFAULT = 0.02   # decomposition norm cap, calibrated for the default well


class DecompositionFailedError(RuntimeError):
    """Newton did not converge: ||phi|| is too large for the unique splitting."""


class Psi0InHaError(RuntimeError):
    """The 2x2 system for R_a is singular: psi0 (nearly) lies in H_a."""


class JacobiDegenerateError(RuntimeError):
    """A modulation denominator fell below 1/4 (valid branch keeps >= 1/2)."""


@dataclass
class Decomposition:
    a: complex
    eta: RadialField
    residuals: tuple
    newton_iterations: int
    branch_point: BranchPoint


def pairing_vectors(bp: BranchPoint):
    """(phi1, phi2) = (-i d psi/d a2, i d psi/d a1) as w-arrays."""
    return -1j * bp.d_psi_da2.w, 1j * bp.d_psi_da1.w


def ha_defects(bp: BranchPoint, eta_w) -> tuple:
    """The two real orthogonality defects of eta against H_{a}."""
    g = bp.psi_E.grid
    p1, p2 = pairing_vectors(bp)
    return (float(g.inner_w(p1, eta_w).real), float(g.inner_w(p2, eta_w).real))


def decompose(phi: RadialField, B: Branch, a0: complex | None = None,
              tol: float = 1e-12, max_iter: int = 50,
              delta1: float | None = None) -> Decomposition:
    """Unique splitting phi = psi_E(a) + eta with eta in H_a.

    Raises DecompositionFailedError on Newton non-convergence (||phi||
    beyond the small-data radius) or when delta1 is given and exceeded.
    """
    g = phi.grid
    nphi = g.l2_w(phi.w)
    if delta1 is not None and nphi > delta1:
        raise DecompositionFailedError(
            f"||phi|| = {nphi:.3e} exceeds the configured delta1 = {delta1:.3e}")
    S = B.S
    a = complex(g.inner_w(S.psi0.w, phi.w)) if a0 is None else complex(a0)
    scale = max(nphi, 1e-300)
    fd_jacobian = False
    for it in range(1, max_iter + 1):
        bp = B.point_at(a)
        eta_w = phi.w - bp.psi_E.w
        F = np.array(ha_defects(bp, eta_w))
        if math.hypot(*F) <= tol * scale:
            return Decomposition(a=a, eta=RadialField(g, eta_w),
                                 residuals=(F[0], F[1]), newton_iterations=it,
                                 branch_point=bp)
        if not fd_jacobian:
            p1, p2 = pairing_vectors(bp)
            J = -np.array([
                [g.inner_w(p1, bp.d_psi_da1.w).real, g.inner_w(p1, bp.d_psi_da2.w).real],
                [g.inner_w(p2, bp.d_psi_da1.w).real, g.inner_w(p2, bp.d_psi_da2.w).real]])
        else:
            J = _fd_jacobian(phi, B, a)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-8:
            raise DecompositionFailedError(
                f"decomposition Jacobian determinant {det:.2e} under the 1e-8 floor")
        da = np.linalg.solve(J, F)
        a = a - complex(da[0], da[1])
        if it == 10 and not fd_jacobian:
            fd_jacobian = True
    raise DecompositionFailedError(
        f"Newton did not converge in {max_iter} iterations at ||phi|| = {nphi:.3e}")


def _fd_jacobian(phi: RadialField, B: Branch, a: complex):
    g = phi.grid
    step = max(1e-6, 1e-3 * abs(a))
    J = np.empty((2, 2))
    for j, e in enumerate((step, 1j * step)):
        bp_p = B.point_at(a + e)
        bp_m = B.point_at(a - e)
        Fp = np.array(ha_defects(bp_p, phi.w - bp_p.psi_E.w))
        Fm = np.array(ha_defects(bp_m, phi.w - bp_m.psi_E.w))
        J[:, j] = (Fp - Fm) / (2.0 * step)
    return J


def calibrate_decomposition_radius(B: Branch, rng, trials: int = 1000,
                                   start: float = 0.05, shrink: float = 0.8,
                                   max_rounds: int = 12) -> float:
    """Largest ||phi|| with 100% Newton convergence over seeded random trials.

    Used offline to pick DELTA1_DEFAULT; the runtime cap stays configurable.
    """
    g = B.S.grid
    cap = start
    for _ in range(max_rounds):
        ok = True
        for _ in range(trials):
            w = _random_small_field(g, rng)
            w *= cap / g.l2_w(w)
            try:
                decompose(RadialField(g, w), B)
            except DecompositionFailedError:
                ok = False
                break
        if ok:
            return cap
        cap *= shrink
    return cap


def _random_small_field(g, rng):
    width = 1.0 + 3.0 * rng.uniform()
    center = 8.0 * rng.uniform()
    wr = np.exp(-(((g.r - center) / width) ** 2))
    return (wr * (rng.uniform() - 0.5) + 1j * wr * (rng.uniform() - 0.5)) * g.r


def apply_Ra(zeta: RadialField, a: complex, B: Branch) -> RadialField:
    """R_a zeta = zeta + z psi0 in H_a, the inverse of P_c restricted to H_a.

    Requires zeta in H_0 (orthogonal to psi0 to 1e-10 relative). The complex
    coefficient z solves the 2x2 real system restoring both H_a pairings;
    determinant under 1e-8 raises Psi0InHaError (|a| beyond the lemma's
    radius).
    """
    g = zeta.grid
    S = B.S
    c0 = g.inner_w(S.psi0.w, zeta.w)
    nz = g.l2_w(zeta.w)
    if abs(c0) > 1e-10 * max(nz, 1e-300):
        raise ValueError("zeta must lie in H_0 (orthogonal to psi0)")
    bp = B.point_at(a)
    p1, p2 = pairing_vectors(bp)
    c1 = g.inner_w(p1, S.psi0.w)
    c2 = g.inner_w(p2, S.psi0.w)
    M = np.array([[c1.real, -c1.imag], [c2.real, -c2.imag]])
    b = -np.array([g.inner_w(p1, zeta.w).real, g.inner_w(p2, zeta.w).real])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) < 1e-8:
        raise Psi0InHaError(
            f"R_a system determinant {det:.2e} under the 1e-8 floor at |a| = {abs(a):g}")
    z = np.linalg.solve(M, b)
    return RadialField(g, zeta.w + complex(z[0], z[1]) * S.psi0.w)


def modulation_rhs(bp: BranchPoint, eta: RadialField, spec) -> tuple:
    """(beta1, beta2, b): projections of -i F2(psi_E, eta) on the tangent
    frame, normalized by the dual pairings; b = sqrt(beta1^2 + beta2^2) is
    the modulation magnitude |a' + iEa|.
    """
    g = bp.psi_E.grid
    p1, p2 = pairing_vectors(bp)
    D1 = g.inner_w(p1, bp.d_psi_da1.w).real
    D2 = g.inner_w(p2, bp.d_psi_da2.w).real
    if min(abs(D1), abs(D2)) < 0.25:
        raise JacobiDegenerateError(
            f"tangent pairing {min(abs(D1), abs(D2)):.3f} < 1/4; branch frame degenerate")
    mF2 = -1j * apply_F2(bp.psi_E, eta, spec).w
    beta1 = float(g.inner_w(p1, mF2).real / D1)
    beta2 = float(g.inner_w(p2, mF2).real / D2)
    return beta1, beta2, math.hypot(beta1, beta2)
