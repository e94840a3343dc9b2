"""Numba switch shared by the hot kernels.

Every accelerated kernel in the package exists twice: a loop version that is
compiled with ``numba.njit`` and a vectorised numpy version. Which one the
public entry points dispatch to is decided once, at import time:

* ``SEABEDPLAN_NUMBA=0`` (or ``false``/``off``) forces the numpy path;
* otherwise numba is used when it can be imported.

Both versions stay importable regardless of the flag so that tests and the
benchmark can compare them directly.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SEABEDPLAN_NUMBA", "1").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in {"0", "false", "off", "no"}


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is lazy, so decorating costs nothing until first call. The
    decorated function is compiled even when ``USE_NUMBA`` is false; the flag
    only controls dispatch.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
