"""Allocation accounting for peak-memory measurement.

Peak RAM is defined as the high-water mark of concurrently *live* tracked
tensor bytes, not the OS resident set: every kernel and the checkpoint
loader register their output arrays here, and CPython's refcounting frees
them deterministically, so the number is reproducible across runs.

Tracking is a no-op unless a measurement is active, so the facade adds no
overhead to normal inference.
"""

from __future__ import annotations

import threading
import weakref
from typing import Callable

import numpy as np

from .errors import NestingError

_lock = threading.Lock()
_active = False
_live = 0
_peak = 0


def track(arr: np.ndarray) -> np.ndarray:
    """Register an array with the tracker; returns it unchanged."""
    global _live, _peak
    if not _active:
        return arr
    nbytes = int(arr.nbytes)
    if nbytes == 0:
        return arr
    with _lock:
        _live += nbytes
        if _live > _peak:
            _peak = _live
    weakref.finalize(arr, _release, nbytes)
    return arr


def _release(nbytes: int) -> None:
    global _live
    with _lock:
        _live -= nbytes


def peak_memory(run: Callable[[], object]) -> int:
    """High-water mark, in bytes, of tracked allocations made inside ``run``.

    Only one measurement may be active at a time; nesting (or calling from
    two threads at once) raises :class:`NestingError`.
    """
    global _active, _live, _peak
    with _lock:
        if _active:
            raise NestingError("peak_memory measurements cannot be nested")
        _active = True
        _live = 0
        _peak = 0
    try:
        run()
    finally:
        with _lock:
            _active = False
    return _peak
