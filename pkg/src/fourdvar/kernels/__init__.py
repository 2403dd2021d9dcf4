"""Hot numerical kernels with a numba backend and a numpy fallback.

The active backend is chosen at import time (see ``fourdvar._jit``); both
backends stay importable so they can be compared directly.
"""
from .. import _jit
from . import _numpy as numpy_backend

if _jit.USE_NUMBA:
    from . import _numba as numba_backend
    active = numba_backend
    BACKEND = "numba"
else:
    numba_backend = None
    active = numpy_backend
    BACKEND = "numpy"

KIND_CODES = {"L63": 0, "L96": 1, "linear": 2}
SCHEME_CODES = {"heun": 0, "midpoint": 1, "rk4": 2}

rhs = active.rhs
rhs_jacobian = active.rhs_jacobian
step = active.step
tangent_step = active.tangent_step
integrate = active.integrate
tangent_window = active.tangent_window

__all__ = [
    "BACKEND", "KIND_CODES", "SCHEME_CODES", "active", "numba_backend",
    "numpy_backend", "rhs", "rhs_jacobian", "step", "tangent_step",
    "integrate", "tangent_window",
]
