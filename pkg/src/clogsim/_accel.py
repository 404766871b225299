"""Backend selection for the numeric kernels.

Kernels in :mod:`clogsim.kernels` come in two flavours: an explicit-loop
version compiled with ``numba.njit`` and a vectorised numpy version. The
numba path is used when numba imports cleanly and ``CLOGSIM_DISABLE_NUMBA``
is unset (or ``0``/``false``). The flag is read once, at import time.
"""

import os

_FLAG = os.environ.get("CLOGSIM_DISABLE_NUMBA", "0").strip().lower()

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _FLAG in ("", "0", "false", "no")

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
    "error_model": "numpy",
}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    Compilation is attempted whenever numba is importable, independent of
    ``USE_NUMBA``, so tests can compare both paths in a single process.
    """
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(**numba_default)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
