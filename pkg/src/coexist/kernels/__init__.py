"""Hot loops, dispatched to numba or numpy according to :mod:`coexist._accel`.

Set ``COEXIST_DISABLE_NUMBA=1`` before import to force the numpy path.
Both implementations stay importable as ``kernels.numba_impl`` (None when
numba is missing) and ``kernels.numpy_impl`` for comparison.
"""
from __future__ import annotations

from .. import _accel
from . import _numpy as numpy_impl

if _accel.HAS_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_active = numba_impl if _accel.USE_NUMBA else numpy_impl

BACKEND = _accel.BACKEND
coexist_values = _active.coexist_values
exit_scan = _active.exit_scan
cone_u = _active.cone_u
harmonic_extension = _active.harmonic_extension
harmonic_values = _active.harmonic_values
sis_step = _active.sis_step
systematic_resample = _active.systematic_resample

__all__ = [
    "BACKEND", "coexist_values", "exit_scan", "cone_u", "harmonic_extension",
    "harmonic_values", "sis_step", "systematic_resample", "numpy_impl", "numba_impl",
]
