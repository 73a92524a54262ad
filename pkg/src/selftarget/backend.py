"""Kernel backend selection.

Convolution and pooling have two interchangeable implementations: compiled
numba loops and a pure-numpy fallback. SELFTARGET_BACKEND picks one:

    auto   use numba when importable, else numpy (default)
    numba  require the compiled kernels, fail loudly if numba is missing
    numpy  force the fallback

The choice is read once, at first kernel use.
"""

import os

ENV_FLAG = "SELFTARGET_BACKEND"

_kernels = None
_name = None


def backend_name():
    """Resolve the backend name from the environment without importing it."""
    mode = os.environ.get(ENV_FLAG, "auto").strip().lower()
    if mode not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{ENV_FLAG} must be one of auto, numba, numpy (got {mode!r})"
        )
    if mode == "numpy":
        return "numpy"
    if mode == "numba":
        return "numba"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


def kernels():
    """Return the active kernel module, importing it on first use."""
    global _kernels, _name
    if _kernels is None:
        _name = backend_name()
        if _name == "numba":
            from . import _kernels_numba as mod
        else:
            from . import _kernels_numpy as mod
        _kernels = mod
    return _kernels


def active_backend():
    kernels()
    return _name
