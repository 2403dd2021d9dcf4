"""Backend switch for the compiled kernels.

Set ``FOURDVAR_DISABLE_NUMBA=1`` to force the pure-numpy path. The flag is
read once at import time.
"""
import os

_FLAG = "FOURDVAR_DISABLE_NUMBA"


def _truthy(value):
    return value.strip().lower() not in ("", "0", "false", "no", "off")


try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

DISABLED_BY_ENV = _truthy(os.environ.get(_FLAG, ""))
USE_NUMBA = numba is not None and not DISABLED_BY_ENV


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
