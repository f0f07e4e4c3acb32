# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused pointwise substeps of the split-step integrators.

Per-step elementwise work (fractional powers, trig) dominates the pointwise
cost of the evolvers; these kernels fuse the array passes and special-case
the integer-power nonlinearities. Selected at import by nlslab.kernels, with
a NumPy fallback of identical semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, pow, sqrt, cosh, sinh

cnp.import_array()

BACKEND = "cython"


cdef inline double _amp_pow(double m2, double expo) nogil:
    # m^expo given m^2, with fast paths for the quadratic/cubic family
    if expo == 2.0:
        return m2
    if expo == 3.0:
        return m2 * sqrt(m2)
    if expo == 4.0:
        return m2 * m2
    return pow(m2, 0.5 * expo)


def nonlinear_phase_step(double complex[::1] w, double[::1] r, double[::1] V,
                         double[::1] cap, double dt, double lam1, double lam2,
                         double al1, double al2):
    """In-place w *= exp(-i*dt*(V + lam1*m^(1+al1) + lam2*m^(1+al2)) - dt*cap),
    with m = |w|/r the local field amplitude. `cap` is the absorbing profile
    (zeros when off)."""
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t j
    cdef double e1 = 1.0 + al1
    cdef double e2 = 1.0 + al2
    cdef double m2, ph, damp, c, s, wr, wi
    for j in range(n):
        wr = w[j].real
        wi = w[j].imag
        m2 = (wr * wr + wi * wi) / (r[j] * r[j])
        ph = V[j]
        if lam1 != 0.0:
            ph += lam1 * _amp_pow(m2, e1)
        if lam2 != 0.0:
            ph += lam2 * _amp_pow(m2, e2)
        ph = -dt * ph
        c = cos(ph)
        s = sin(ph)
        damp = exp(-dt * cap[j]) if cap[j] != 0.0 else 1.0
        w[j].real = damp * (wr * c - wi * s)
        w[j].imag = damp * (wr * s + wi * c)


def linearized_phase_step(double complex[::1] z, double[::1] p, double[::1] m,
                          double tau):
    """In-place exact substep of d(zeta)/dt = -i(g_u zeta + g_ubar conj(zeta))
    for a real branch profile, i.e. per node d(x,y)/dt = (m*y, -p*x) with
    p = g'(psi), m = g(psi)/psi. Exponential computed in closed form."""
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t j
    cdef double q, om, c1, s1, x, y
    for j in range(n):
        q = p[j] * m[j]
        if q * tau * tau > 1e-24:
            om = sqrt(q)
            c1 = cos(om * tau)
            s1 = sin(om * tau) / om
        elif q * tau * tau < -1e-24:
            om = sqrt(-q)
            c1 = cosh(om * tau)
            s1 = sinh(om * tau) / om
        else:
            c1 = 1.0 - 0.5 * q * tau * tau
            s1 = tau
        x = z[j].real
        y = z[j].imag
        z[j].real = c1 * x + m[j] * s1 * y
        z[j].imag = -p[j] * s1 * x + c1 * y
