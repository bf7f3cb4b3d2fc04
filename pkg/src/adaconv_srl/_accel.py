"""Numba switch for the hot kernels.

Set ``ADACONV_SRL_NUMBA=0`` before import to force the pure-numpy path.
"""

import os

_wanted = os.environ.get("ADACONV_SRL_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = _wanted and HAVE_NUMBA


def maybe_njit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
