"""snvsim: nonlocal traffic-flow conservation laws under bounded noise.

Finite-volume solvers for a nonlocal velocity model with stochastic velocity
perturbations, a deterministic mean-value proxy driven by the propagated
noise distribution, characteristic tracing, and Monte Carlo tooling. Hot
loops run on a compiled extension when available, with a bit-identical
pure-numpy fallback.
"""

__version__ = "0.1.0"

from ._backend import BACKEND

__all__ = ["BACKEND", "__version__"]
