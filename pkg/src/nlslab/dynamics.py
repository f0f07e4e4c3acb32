"""Time evolution: the full NLS flow, the linearized propagator, and records.

Full flow. Strang splitting for i u_t = (-Lap + V) u + g(u): a half step of
the pointwise phase e^{-i(V + g(|u|)/|u|) dt/2} (gauge covariance keeps |u|
constant under this substep, so it is exact), a full kinetic step through
sine-transform diagonal phases, and the mirrored half phase. The kinetic
symbol is configurable: "fd" matches the tridiagonal H so branch states are
discrete stationary states; "exact" realizes the exact Dirichlet-interval
free flow for comparisons against free-space closed forms. An optional
quartic complex absorbing potential -iW(r) emulates radiation to infinity on
the truncated domain.

Linearized flow. Omega(t,s) integrates zeta' = -iH zeta - i F1(psi_E, zeta)
by composing the exact eigenbasis step e^{-iH dt} with the exact per-node
2x2 real exponential of the R-linear multiplicative part (the L+/L- structure
of real branch profiles is preserved exactly; complex amplitudes are handled
by gauge rotation). T(t,s) = P_c Omega(t,s) - e^{-iH(t-s)} P_c measures the
deviation from the bare flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from nlslab import kernels
from nlslab.branch import Branch, BranchPoint
from nlslab.grid import RadialField, lp_norm, save_field
from nlslab.hamiltonian import SpectralData, project_continuous
from nlslab.modulation import DecompositionFailedError, decompose, modulation_rhs
from nlslab.nonlinearity import NonlinearitySpec


class WindowNotFoundError(RuntimeError):
    """No boundary-clean decay window available in the record."""


@dataclass
class AbsorberSpec:
    """Quartic complex absorbing potential -iW, W = strength*((r-r0)/(R-r0))^4
    beyond the onset radius r0."""

    strength: float = 0.05
    onset_radius: float | None = None   # default 0.75 R at build time

    def profile(self, g) -> NDArray:
        r0 = 0.75 * g.radius_max if self.onset_radius is None else self.onset_radius
        if not (0.0 < r0 < g.radius_max):
            raise ValueError("absorber onset radius must lie inside the domain")
        x = np.clip((g.r - r0) / (g.radius_max - r0), 0.0, None)
        return self.strength * x**4


@dataclass
class EvolverConfig:
    dt: float = 0.005
    t_final: float = 40.0
    absorber: AbsorberSpec | None = None
    record_stride: int = 50
    decompose_each_record: bool = True
    kinetic: str = "fd"            # "fd" (H-consistent) or "exact" (interval flow)
    snapshot_times: tuple = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.kinetic not in ("fd", "exact"):
            raise ValueError("kinetic symbol must be 'fd' or 'exact'")


@dataclass
class TrajectoryRecord:
    times: NDArray
    a: NDArray
    E: NDArray
    eta_l2: NDArray
    eta_p1: NDArray
    eta_p2: NDArray
    beta1: NDArray
    beta2: NDArray
    phase_integral: NDArray
    mass: NDArray
    energy: NDArray
    p1: float
    p2: float
    gaps: list
    radius_max: float
    absorber_on: bool
    theta: NDArray = None
    E_limits: dict = field(default_factory=dict)
    final_w: NDArray = None

    def valid(self) -> NDArray:
        return ~np.isnan(self.E)


def _energy(g, w, mu, V, spec):
    c = g.dst_forward(w)
    kin = 4.0 * np.pi * g.dr * float(np.sum(mu * np.abs(c) ** 2))
    m = np.abs(w) / g.r
    pot = 4.0 * np.pi * g.dr * float(np.sum(V * np.abs(w) ** 2))
    Gm = spec.lambda1 * m ** (3.0 + spec.alpha1) / (3.0 + spec.alpha1)
    if spec.lambda2 != 0.0:
        Gm = Gm + spec.lambda2 * m ** (3.0 + spec.alpha2) / (3.0 + spec.alpha2)
    nl = 2.0 * float(np.sum(g.quadrature_weights * Gm))
    return kin + pot + nl


def evolve_nls(u0: RadialField, cfg: EvolverConfig, S: SpectralData | None,
               spec: NonlinearitySpec, branch: Branch | None = None,
               snapshot_dir: str | None = None) -> TrajectoryRecord:
    """Strang split-step evolution with per-stride modulation tracking.

    S None means the free-space configuration V = 0 (no bound state, so no
    modulation tracking). Decomposition failures at a record time are logged
    in `gaps` (that record's modulation channels are NaN) and the evolution
    continues.
    """
    g = u0.grid
    decompose_records = cfg.decompose_each_record and S is not None
    if branch is None and decompose_records:
        branch = Branch(S, spec)
    V = S.potential.values(g) if S is not None else np.zeros(g.node_count)
    cap = cfg.absorber.profile(g) if cfg.absorber else np.zeros(g.node_count)
    mu = g.mu_fd if cfg.kinetic == "fd" else g.mu_exact
    kin_phase = np.exp(-1j * mu * cfg.dt)
    w = u0.w.astype(complex).copy()
    nsteps = int(round(cfg.t_final / cfg.dt))
    n_rec = nsteps // cfg.record_stride + 1

    cols = {k: np.full(n_rec, np.nan) for k in
            ("E", "eta_l2", "eta_p1", "eta_p2", "beta1", "beta2", "mass", "energy")}
    a_col = np.full(n_rec, np.nan + 0j)
    times = np.empty(n_rec)
    gaps = []
    p1, p2 = 3.0 + spec.alpha1, 3.0 + spec.alpha2
    snap_steps = {int(round(ts / cfg.dt)) for ts in cfg.snapshot_times}

    a_prev = None
    idx = 0

    def record(step):
        nonlocal a_prev, idx
        t = step * cfg.dt
        times[idx] = t
        cols["mass"][idx] = 4.0 * np.pi * g.dr * float(np.sum(np.abs(w) ** 2))
        cols["energy"][idx] = _energy(g, w, mu, V, spec)
        if decompose_records:
            try:
                dc = decompose(RadialField(g, w), branch, a0=a_prev)
                a_prev = dc.a
                a_col[idx] = dc.a
                cols["E"][idx] = dc.branch_point.E
                eta = dc.eta
                cols["eta_l2"][idx] = g.l2_w(eta.w)
                cols["eta_p1"][idx] = lp_norm(eta, p1)
                cols["eta_p2"][idx] = lp_norm(eta, p2)
                b1, b2, _ = modulation_rhs(dc.branch_point, eta, spec)
                cols["beta1"][idx], cols["beta2"][idx] = b1, b2
            except DecompositionFailedError:
                gaps.append(t)
        if snapshot_dir is not None and step in snap_steps:
            save_field(f"{snapshot_dir}/snapshot_t{t:.4f}",
                       RadialField(g, w.copy()), time=t)
        idx += 1

    record(0)
    for n in range(1, nsteps + 1):
        kernels.nonlinear_phase_step(w, g.r, V, cap, 0.5 * cfg.dt,
                                     spec.lambda1, spec.lambda2,
                                     spec.alpha1, spec.alpha2)
        w = g.dst_inverse(g.dst_forward(w) * kin_phase)
        kernels.nonlinear_phase_step(w, g.r, V, cap, 0.5 * cfg.dt,
                                     spec.lambda1, spec.lambda2,
                                     spec.alpha1, spec.alpha2)
        if n % cfg.record_stride == 0:
            record(n)

    times = times[:idx]
    rec = TrajectoryRecord(
        times=times, a=a_col[:idx], E=cols["E"][:idx],
        eta_l2=cols["eta_l2"][:idx], eta_p1=cols["eta_p1"][:idx],
        eta_p2=cols["eta_p2"][:idx], beta1=cols["beta1"][:idx],
        beta2=cols["beta2"][:idx],
        phase_integral=_cumulative_phase(times, cols["E"][:idx]),
        mass=cols["mass"][:idx], energy=cols["energy"][:idx],
        p1=p1, p2=p2, gaps=gaps, radius_max=g.radius_max,
        absorber_on=cfg.absorber is not None, final_w=w)
    return rec


def _cumulative_phase(times, E):
    """Trapezoid accumulation of int_0^t E(s) ds over the record grid,
    carrying the last valid E across decomposition gaps."""
    Ef = np.array(E, dtype=float)
    valid = ~np.isnan(Ef)
    if not np.any(valid):
        return np.full_like(Ef, np.nan)
    # forward fill
    idxv = np.where(valid, np.arange(len(Ef)), 0)
    np.maximum.accumulate(idxv, out=idxv)
    Ef = Ef[idxv]
    if np.isnan(Ef[0]):
        Ef[0] = Ef[valid][0] if np.any(valid) else np.nan
    out = np.zeros_like(Ef)
    out[1:] = np.cumsum(0.5 * (Ef[1:] + Ef[:-1]) * np.diff(times))
    return out


# -- linearized propagator ----------------------------------------------------

class BranchPath:
    """Amplitude path a(.) for the linearized flow: frozen or recorded."""

    def __init__(self, times=None, avalues=None, frozen: complex | None = None):
        self._frozen = frozen
        if frozen is None:
            times = np.asarray(times, dtype=float)
            avalues = np.asarray(avalues, dtype=complex)
            ok = ~np.isnan(avalues.real)
            self._times, self._a = times[ok], avalues[ok]

    @classmethod
    def frozen_at(cls, a: complex) -> "BranchPath":
        return cls(frozen=a)

    @classmethod
    def from_record(cls, rec: TrajectoryRecord) -> "BranchPath":
        return cls(times=rec.times, avalues=rec.a)

    @property
    def is_frozen(self) -> bool:
        return self._frozen is not None

    def a_at(self, t: float) -> complex:
        if self._frozen is not None:
            return self._frozen
        re = np.interp(t, self._times, self._a.real)
        im = np.interp(t, self._times, self._a.imag)
        return complex(re, im)


class _LinearizedStepper:
    """Shared machinery for Omega(t,s): caches the branch profiles and applies
    the half F1 / full H / half F1 composition to a block of columns."""

    def __init__(self, path: BranchPath, S: SpectralData, spec: NonlinearitySpec):
        self.path, self.S, self.spec = path, S, spec
        self.branch = Branch(S, spec)
        self._cached_absa = None
        self._p = self._m = None

    def _profiles(self, a: complex):
        absa = abs(a)
        if self._cached_absa is None or abs(absa - self._cached_absa) > 1e-13 * max(absa, 1e-13):
            bp = self.branch.point_at(absa)
            mvals = np.abs(bp.psi_real) / self.S.grid.r
            self._p = self.spec.gprime(mvals)
            self._m = self.spec.gain(mvals)
            self._cached_absa = absa
        phase = a / absa if absa > 1e-13 else 1.0
        return self._p, self._m, phase

    def f1_half(self, Z: NDArray, t: float, dt_half: float):
        a = self.path.a_at(t)
        p, m, phase = self._profiles(a)
        if Z.ndim == 1:
            z = Z if phase == 1.0 else Z * np.conj(phase)
            kernels.linearized_phase_step(z, p, m, dt_half)
            Z[:] = z if phase == 1.0 else z * phase
            return
        # block: vectorized numpy path (BLAS transform dominates anyway)
        z = Z if phase == 1.0 else Z * np.conj(phase)
        q = p * m
        qt2 = q * dt_half * dt_half
        om_t = np.sqrt(np.abs(q)) * dt_half
        with np.errstate(invalid="ignore", divide="ignore"):
            c1 = np.where(qt2 > 1e-24, np.cos(om_t),
                          np.where(qt2 < -1e-24, np.cosh(om_t), 1.0 - 0.5 * qt2))
            s1 = np.where(np.abs(qt2) > 1e-24,
                          np.where(qt2 > 0, np.sin(om_t), np.sinh(om_t))
                          / np.where(np.abs(q) > 0, np.sqrt(np.abs(q)), 1.0),
                          dt_half)
        x, y = z.real, z.imag
        zn = (c1[:, None] * x + (m * s1)[:, None] * y) + 1j * (
            -(p * s1)[:, None] * x + c1[:, None] * y)
        Z[:] = zn if phase == 1.0 else zn * phase

    def h_step(self, Z: NDArray, dt: float) -> NDArray:
        S = self.S
        ph = np.exp(-1j * S.eigenvalues * dt)
        if Z.ndim == 1:
            return S.from_eigenbasis(S.to_eigenbasis(Z) * ph)
        C = S.eigenvectors.T @ Z.real + 1j * (S.eigenvectors.T @ Z.imag)
        C *= ph[:, None]
        return S.eigenvectors @ C.real + 1j * (S.eigenvectors @ C.imag)

    def run(self, Z: NDArray, s: float, t: float, dt: float,
            observer=None) -> NDArray:
        span = t - s
        if span == 0.0:
            return Z
        nsteps = max(1, int(round(abs(span) / dt)))
        h = span / nsteps
        tau = s
        if observer:
            observer(tau, Z)
        for _ in range(nsteps):
            self.f1_half(Z, tau, 0.5 * h)
            Z = self.h_step(Z, h)
            self.f1_half(Z, tau + h, 0.5 * h)
            tau += h
            if observer:
                observer(tau, Z)
        return Z


def evolve_linearized(v: RadialField, s: float, t: float, path: BranchPath,
                      cfg: EvolverConfig, S: SpectralData,
                      spec: NonlinearitySpec) -> RadialField:
    """Omega(t,s) v: the linearized flow around the (moving) branch point.

    R-linear in v (linear over real scalars, conjugate-sensitive through the
    g_ubar channel). Backward runs (t < s) integrate the generator backward.
    """
    stepper = _LinearizedStepper(path, S, spec)
    w = v.w.astype(complex).copy()
    w = stepper.run(w, s, t, cfg.dt)
    return RadialField(v.grid, w)


def evolve_linearized_block(V0: NDArray, s: float, t: float, path: BranchPath,
                            cfg: EvolverConfig, S: SpectralData,
                            spec: NonlinearitySpec, observer=None) -> NDArray:
    """Block variant for probe ensembles: V0 has one column per vector."""
    stepper = _LinearizedStepper(path, S, spec)
    return stepper.run(V0.astype(complex).copy(), s, t, cfg.dt, observer=observer)


def apply_T(v: RadialField, s: float, t: float, path: BranchPath,
            cfg: EvolverConfig, S: SpectralData,
            spec: NonlinearitySpec) -> RadialField:
    """T(t,s) v = P_c Omega(t,s) v - e^{-iH(t-s)} P_c v."""
    om = evolve_linearized(v, s, t, path, cfg, S, spec)
    pc_om = project_continuous(om, S)
    pc_v = project_continuous(v, S)
    c = S.to_eigenbasis(pc_v.w) * np.exp(-1j * S.eigenvalues * (t - s))
    bare = S.from_eigenbasis(c)
    return RadialField(v.grid, pc_om.w - bare)


# -- asymptotics --------------------------------------------------------------

def extract_asymptotics(rec: TrajectoryRecord, t_clean_factor: float = 0.3,
                        E_inf: float | None = None) -> dict:
    """E_inf (tail average of E, or a supplied value), the averaged phase
    defect theta(t) = (1/t) int_0^t (E - E_inf) ds, and a convergence flag
    (|theta| decreasing over the final third of the window). Without an
    absorber the usable window is capped at the boundary-clean span
    t <= t_clean_factor * R."""
    ok = rec.valid()
    times = rec.times[ok]
    if rec.absorber_on:
        t_cap = times[-1] if len(times) else 0.0
    else:
        t_cap = t_clean_factor * rec.radius_max
    usable = times[times <= t_cap]
    if len(usable) < 9:
        raise WindowNotFoundError(
            "no decay window: record too short or boundary-contaminated")
    t_hi = usable[-1]
    tail = (times >= 2.0 * t_hi / 3.0) & (times <= t_hi)
    if np.sum(tail) < 3:
        raise WindowNotFoundError("tail window has fewer than 3 records")
    if E_inf is None:
        E_inf = float(np.mean(rec.E[ok][tail]))

    tpos = rec.times > 0
    theta = np.full(len(rec.times), np.nan)
    theta[tpos] = (rec.phase_integral[tpos] - E_inf * rec.times[tpos]) / rec.times[tpos]
    rec.theta = theta
    rec.E_limits = {"E_inf": E_inf}

    th_tail = np.abs(theta[ok][tail])
    slope = np.polyfit(times[tail], th_tail, 1)[0] if len(th_tail) > 2 else 0.0
    converged = bool(th_tail[-1] <= th_tail[0] and slope <= 0.0)
    return {"E_inf": E_inf, "theta_series": (rec.times.copy(), theta),
            "converged": converged}


def write_trajectory_csv(rec: TrajectoryRecord, path: str,
                         manifest_hash: str = "") -> None:
    theta = rec.theta if rec.theta is not None else np.full(len(rec.times), np.nan)
    lines = ["# manifest=" + manifest_hash,
             "t,re_a,im_a,E,eta_l2,eta_p1,eta_p2,beta1,beta2,theta,mass"]
    for i, t in enumerate(rec.times):
        lines.append(
            f"{t:.9e},{rec.a[i].real:.15e},{rec.a[i].imag:.15e},{rec.E[i]:.15e},"
            f"{rec.eta_l2[i]:.12e},{rec.eta_p1[i]:.12e},{rec.eta_p2[i]:.12e},"
            f"{rec.beta1[i]:.12e},{rec.beta2[i]:.12e},{theta[i]:.12e},{rec.mass[i]:.15e}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
