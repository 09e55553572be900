"""Runtime switches for the compiled kernels.

Two environment variables are read once at import time:

``PLACID_DISABLE_NUMBA``
    Any value other than ``""``, ``"0"``, ``"false"`` or ``"no"`` forces the
    pure-numpy code path even when numba is importable.
``PLACID_NUM_THREADS``
    Thread count handed to numba's parallel runtime.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:  # pragma: no cover - exercised implicitly by whichever path is installed
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_DISABLED = _flag("PLACID_DISABLE_NUMBA")
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


def num_threads() -> int | None:
    raw = os.environ.get("PLACID_NUM_THREADS", "").strip()
    if not raw:
        return None
    value = int(raw)
    if value < 1:
        raise ValueError(f"PLACID_NUM_THREADS must be >= 1, got {raw!r}")
    return value


if USE_NUMBA:
    # The system TBB is too old for numba; pick a layer that works unless
    # the user already chose one.
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "omp"
    _threads = num_threads()
    if _threads is not None:
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
