"""Optional numba acceleration.

Hot pixel loops are written in the numba-compatible subset of Python so the
package still works (slowly) when numba is missing or disabled through
``MF_NO_JIT=1``.
"""

from __future__ import annotations

import os

try:
    if os.environ.get("MF_NO_JIT", "") not in ("", "0"):
        raise ImportError("jit disabled by MF_NO_JIT")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None
    HAVE_NUMBA = False


def njit(func):
    if _njit is None:
        return func
    return _njit(cache=True, nogil=True)(func)


def thread_count() -> int:
    """Parallelism cap from ``MF_THREADS`` (unset -> 1, ``0`` -> all cores)."""
    raw = os.environ.get("MF_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n <= 0:
        return os.cpu_count() or 1
    return n
