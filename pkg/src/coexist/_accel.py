"""Backend selection.

Hot loops live in :mod:`coexist.kernels` in two flavours: numba ``@njit``
kernels and pure-numpy equivalents.  The numba path is used when numba
imports and ``COEXIST_DISABLE_NUMBA`` is unset (or ``0``).
"""
from __future__ import annotations

import os

_FLAG = "COEXIST_DISABLE_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"
