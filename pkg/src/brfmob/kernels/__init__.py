"""Hot numeric kernels with an optional numba backend.

The backend is chosen once, at import time. Set ``BRFMOB_DISABLE_NUMBA=1``
to force the pure-numpy path; it is also used automatically when numba is
not installed.
"""
import os
import warnings

from . import _numpy as numpy_backend

_FALSY = {"", "0", "false", "no", "off"}


def _numba_requested():
    return os.environ.get("BRFMOB_DISABLE_NUMBA", "").strip().lower() in _FALSY


numba_backend = None
if _numba_requested():
    try:
        from . import _numba as numba_backend
    except ImportError:
        warnings.warn("numba not available; using the pure-numpy kernels")
        numba_backend = None

backend = numba_backend if numba_backend is not None else numpy_backend
BACKEND_NAME = "numba" if numba_backend is not None else "numpy"

solve_logit = backend.solve_logit
kde_grid = backend.kde_grid
accumulate_centralities = backend.accumulate_centralities
softplus = numpy_backend.softplus

__all__ = [
    "BACKEND_NAME",
    "accumulate_centralities",
    "kde_grid",
    "numba_backend",
    "numpy_backend",
    "softplus",
    "solve_logit",
]
