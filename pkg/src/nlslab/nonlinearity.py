"""The admissible local nonlinearity family and its effective potentials.

The family is the two-power model

    g(s) = lambda1 |s|^(1+alpha1) s + lambda2 |s|^(1+alpha2) s,
    0 < alpha1 <= alpha2 < 3,

odd and C^2 on the reals, extended to complex arguments by the gauge rule
g(e^{i theta} s) = e^{i theta} g(s). It is the minimal family with distinct
lower/upper growth exponents, so the subcritical (alpha1 <= 1/3) and
supercritical regimes are both reachable.

The R-linear Gateaux derivative of g at a branch profile psi splits into
multiplication operators: F1(psi)[zeta] = g_u zeta + g_ubar conj(zeta), where
for psi = e^{i theta} m with m >= 0

    g_u    = (g'(m) + g(m)/m) / 2,
    g_ubar = e^{2 i theta} (g'(m) - g(m)/m) / 2.

For real psi this is the standard L+/L- split acting on (Re, Im). The ratio
g(m)/m is evaluated directly as lambda1 m^(1+alpha1) + lambda2 m^(1+alpha2),
never by division, so the far tail has no 0/0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from nlslab.grid import RadialField, RadialGrid


class InvalidProfileError(ValueError):
    """Profile violates the sign-definiteness a correct branch solve gives."""


@dataclass
class NonlinearitySpec:
    alpha1: float = 1.0
    alpha2: float = 1.0
    lambda1: float = -1.0
    lambda2: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha1 <= self.alpha2 < 3.0):
            raise ValueError(
                f"need 0 < alpha1 <= alpha2 < 3, got ({self.alpha1}, {self.alpha2})")

    # pointwise evaluations; m denotes a nonnegative magnitude array
    def gain(self, m):
        """g(m)/m = lambda1 m^(1+a1) + lambda2 m^(1+a2), evaluated directly."""
        out = self.lambda1 * m ** (1.0 + self.alpha1)
        if self.lambda2 != 0.0:
            out = out + self.lambda2 * m ** (1.0 + self.alpha2)
        return out

    def gprime(self, m):
        """g'(m) = (2+a1) lambda1 m^(1+a1) + (2+a2) lambda2 m^(1+a2)."""
        out = (2.0 + self.alpha1) * self.lambda1 * m ** (1.0 + self.alpha1)
        if self.lambda2 != 0.0:
            out = out + (2.0 + self.alpha2) * self.lambda2 * m ** (1.0 + self.alpha2)
        return out

    def gthird(self, m):
        """g'''(m) for m > 0 (exists except at zero)."""
        a1, a2 = self.alpha1, self.alpha2
        out = (2 + a1) * (1 + a1) * a1 * self.lambda1 * m ** (a1 - 1.0)
        if self.lambda2 != 0.0:
            out = out + (2 + a2) * (1 + a2) * a2 * self.lambda2 * m ** (a2 - 1.0)
        return out

    def g2_bound_constant(self) -> float:
        """C with |g''(s)| <= C(|s|^a1 + |s|^a2)."""
        return (2.0 + self.alpha2) * (1.0 + self.alpha2) * (
            abs(self.lambda1) + abs(self.lambda2))

    def to_manifest(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2,
                "lambda1": self.lambda1, "lambda2": self.lambda2}


def evaluate_g(z, spec: NonlinearitySpec):
    """g(z) = (lambda1 |z|^(1+a1) + lambda2 |z|^(1+a2)) z, gauge-covariant."""
    return spec.gain(np.abs(z)) * z


def effective_potentials(psi: NDArray, spec: NonlinearitySpec):
    """(g_u, g_ubar) multiplication profiles at a (possibly rotated) profile.

    psi is the pointwise value array of the branch profile; the phase-squared
    factor rides on g_ubar. Nodes where psi vanishes get phase 1 (both
    multipliers vanish there anyway).
    """
    m = np.abs(psi)
    gp = spec.gprime(m)
    gr = spec.gain(m)
    phase2 = np.ones_like(psi, dtype=complex)
    # below the 1e-14 relative floor the multipliers vanish to this order and
    # division underflows; take the phase-1 limit there instead
    nz = m > 1e-14 * np.max(m) if np.max(m) > 0 else m > 0
    phase2[nz] = (psi[nz] / m[nz]) ** 2
    g_u = 0.5 * (gp + gr).astype(complex)
    g_ubar = 0.5 * phase2 * (gp - gr)
    return g_u, g_ubar


def apply_F1(psi: RadialField, zeta: RadialField, spec: NonlinearitySpec) -> RadialField:
    """R-linear derivative of g at psi: g_u zeta + g_ubar conj(zeta)."""
    g_u, g_ubar = effective_potentials(psi.u, spec)
    return RadialField(psi.grid, (g_u * zeta.u + g_ubar * np.conj(zeta.u)) * psi.grid.r)


def apply_F2(psi: RadialField, eta: RadialField, spec: NonlinearitySpec) -> RadialField:
    """Superlinear remainder g(psi+eta) - g(psi) - F1(psi, eta)."""
    u0, du = psi.u, eta.u
    g_u, g_ubar = effective_potentials(u0, spec)
    vals = (evaluate_g(u0 + du, spec) - evaluate_g(u0, spec)
            - g_u * du - g_ubar * np.conj(du))
    return RadialField(psi.grid, vals * psi.grid.r)


def check_H2prime(spec: NonlinearitySpec, s_max: float, samples: int = 1000) -> dict:
    """Sample |g'''(s)| <= C (s^(a1-1) + s^(a2-1)) on (0, s_max]."""
    C = 3.0 * (2.0 + spec.alpha2) * (1.0 + spec.alpha2) * (
        abs(spec.lambda1) + abs(spec.lambda2))
    s = np.geomspace(s_max * 1e-6, s_max, samples)
    bound = C * (s ** (spec.alpha1 - 1.0) + s ** (spec.alpha2 - 1.0))
    ratio = np.abs(spec.gthird(s)) / bound
    return {"constant": C, "max_ratio": float(np.max(ratio)),
            "ok": bool(np.max(ratio) <= 1.0)}


# -- radial Fourier transform and the L^1 multiplier functional --------------

def radial_fourier(g: RadialGrid, f_values: NDArray, ks: NDArray) -> NDArray:
    """3D Fourier transform of a radial function on the analysis convention
    fhat(k) = int_{R^3} f(x) e^{-ik.x} dx = (4 pi / k) int_0^R sin(kr) f(r) r dr.
    """
    ks = np.asarray(ks, dtype=float)
    # int sin(kr) (f r) dr by the interior rectangle rule (integrand vanishes
    # at both ends for decaying f)
    fr = f_values * g.r
    mat = np.sin(np.outer(ks, g.r))
    vals = g.dr * (mat @ fr)
    return 4.0 * np.pi * vals / ks


FOURIER_CONVENTION = ("fhat(k) = int f e^{-ikx} dx; "
                      "J(f) = (2 pi)^{-3} int |fhat| dk = "
                      "(2 pi^2)^{-1} int_0^inf |fhat(k)| k^2 dk")


def fourier_l1_functional(g: RadialGrid, f_values: NDArray,
                          k_grid: NDArray | None = None) -> tuple[float, NDArray, NDArray]:
    """J(f) = (2 pi)^{-3} ||fhat||_{L^1(dk)}, the constant with
    ||f||_inf <= J(f) and the exact continuum JSS multiplier bound.

    The default k-grid is linear: the integrand |fhat| k^2 is smooth in k, so
    the uniform trapezoid is exact to rounding (a log grid loses ~1e-6).
    Returns (J, ks, |fhat(k)|).
    """
    if k_grid is None:
        k_max = 0.5 * np.pi / g.dr
        k_grid = np.linspace(k_max / 4096, k_max, 4096)
    fh = np.abs(radial_fourier(g, f_values, k_grid))
    J = np.trapezoid(fh * k_grid**2, k_grid) / (2.0 * np.pi**2)
    return float(J), k_grid, fh


def check_H2(psi_E: RadialField, spec: NonlinearitySpec,
             noise_floor: float = 1e-11) -> dict:
    """Finite-L^1-Fourier check for the effective potentials g'(psi_E) and
    g(psi_E)/psi_E of a positive real branch profile.

    The k-tail exponent is fitted on the last resolved decade (above the
    quadrature noise floor); the transform is integrable in k^2 dk when that
    exponent is below -3 or the transform falls under the floor before the
    k-grid ends (faster-than-polynomial decay).
    """
    u = psi_E.u
    if np.max(np.abs(u.imag)) > 1e-12 * np.max(np.abs(u.real)):
        raise InvalidProfileError("branch profile must be real")
    m = u.real
    # sign-definiteness per the positivity of real branch solutions; an
    # underflowed-to-zero far tail is not a sign change
    if np.min(m) < 0 or np.max(m) <= 0:
        raise InvalidProfileError(
            "branch profile must be sign-definite and positive")
    g = psi_E.grid
    report = {"convention": FOURIER_CONVENTION}
    k_tail = np.geomspace(1e-3, 0.5 * np.pi / g.dr, 2048)  # log-resolved for the fit
    for name, vals in (("gprime", spec.gprime(m)), ("gratio", spec.gain(m))):
        J, _, _ = fourier_l1_functional(g, vals)
        ks = k_tail
        fh = np.abs(radial_fourier(g, vals, ks))
        peak = np.max(fh)
        above = fh > noise_floor * peak
        k_star = ks[above][-1] if np.any(above) else ks[0]
        if k_star < 0.5 * ks[-1]:
            # fell below the floor inside the grid: super-polynomial decay
            finite, tail_exp = True, -math.inf
        else:
            msk = (ks >= k_star / 10.0) & (ks <= k_star) & above
            tail_exp = float(np.polyfit(np.log(ks[msk]), np.log(fh[msk]), 1)[0])
            finite = tail_exp < -3.0
        report[f"l1_norm_{name}_hat"] = J
        report[f"tail_exponent_{name}"] = tail_exp
        report[f"finite_{name}"] = finite
    report["finite"] = bool(report["finite_gprime"] and report["finite_gratio"])
    return report
