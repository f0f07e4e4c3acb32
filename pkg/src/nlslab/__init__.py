"""nlslab: a numerical laboratory for ground-state dynamics of the 3D NLS
with potential — branch continuation, modulation decomposition, linearized
propagators, and dispersive-decay probes on a radial grid."""

__version__ = "0.1.0"
