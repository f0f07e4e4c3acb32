"""Kernel backend selection: compiled extension if built, NumPy otherwise."""
try:
    from nlslab import _kernels as _impl
except ImportError:  # extension not built
    from nlslab import _kernels_py as _impl

BACKEND = _impl.BACKEND
nonlinear_phase_step = _impl.nonlinear_phase_step
linearized_phase_step = _impl.linearized_phase_step
