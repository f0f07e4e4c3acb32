"""Pure-NumPy fallback for the compiled kernels (identical semantics)."""
import numpy as np

BACKEND = "numpy"


def nonlinear_phase_step(w, r, V, cap, dt, lam1, lam2, al1, al2):
    m = np.abs(w) / r
    ph = V.copy()
    if lam1 != 0.0:
        ph = ph + lam1 * m ** (1.0 + al1)
    if lam2 != 0.0:
        ph = ph + lam2 * m ** (1.0 + al2)
    w *= np.exp(-1j * dt * ph - dt * cap)


def linearized_phase_step(z, p, m, tau):
    q = p * m
    qt2 = q * tau * tau
    om_t = np.sqrt(np.abs(q)) * tau
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(qt2 > 1e-24, np.cos(om_t),
                      np.where(qt2 < -1e-24, np.cosh(om_t), 1.0 - 0.5 * qt2))
        s1 = np.where(qt2 > 1e-24, np.sin(om_t) / np.sqrt(np.abs(q)),
                      np.where(qt2 < -1e-24, np.sinh(om_t) / np.sqrt(np.abs(q)),
                               tau))
    x = z.real.copy()
    y = z.imag.copy()
    z.real = c1 * x + m * s1 * y
    z.imag = -p * s1 * x + c1 * y
