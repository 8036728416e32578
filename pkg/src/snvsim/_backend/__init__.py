"""Backend selection: compiled kernels when importable, numpy fallback else.

Both backends implement the same functions with bit-identical floating-point
results; the compiled one is just faster. Set SNVSIM_FORCE_FALLBACK=1 to skip
the extension (used by the backend-equivalence tests and the benchmark).
"""

import os

from . import fallback

if os.environ.get("SNVSIM_FORCE_FALLBACK"):
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"

convolve_velocity = _impl.convolve_velocity
step_upwind = _impl.step_upwind
jacobi_path = _impl.jacobi_path
# Only the fallback carries a vectorized multi-path sampler; the compiled
# per-path kernel is already fast enough to loop over.
jacobi_paths = getattr(_impl, "jacobi_paths", None)


def compiled_module():
    """Return the compiled kernel module or None if it is not built."""
    if BACKEND == "compiled":
        return _impl
    try:
        from . import _kernels
        return _kernels
    except ImportError:
        return None
