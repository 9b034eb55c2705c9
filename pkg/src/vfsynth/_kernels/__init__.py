"""Hot numerical kernels: CSTR rollout and adjoint gradient sweep.

A compiled Cython extension is preferred; a pure-Python implementation with
identical operation order is used when the extension is unavailable or when
VFSYNTH_FORCE_FALLBACK is set. Both expose the same three entry points:

    rollout_fine(x0, u_seq, h, substeps, params6) -> (N*substeps+1, 2) array
    stage_value_and_gradient(...) -> (stage value, du gradient, x0 adjoint)
    interval_rollout_jac(x0, u, h, substeps, params6) -> (x_next, Phi, B)
"""

import os

from . import fallback

if os.environ.get("VFSYNTH_FORCE_FALLBACK"):
    _impl = fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "python"

rollout_fine = _impl.rollout_fine
stage_value_and_gradient = _impl.stage_value_and_gradient
interval_rollout_jac = _impl.interval_rollout_jac

__all__ = [
    "BACKEND",
    "rollout_fine",
    "stage_value_and_gradient",
    "interval_rollout_jac",
    "fallback",
]
