"""Process-level knobs that affect numeric throughput."""

import ctypes
import ctypes.util
import os

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_tuned = False


def tune_allocator(threshold=1 << 30):
    """Keep large numpy temporaries on the heap instead of fresh mmaps.

    glibc hands every allocation above 128 KiB to mmap and returns it on free,
    so each big temporary pays for page faults again. Raising both thresholds
    lets freed blocks be reused. Returns False where glibc is unavailable.
    """
    global _tuned
    if _tuned:
        return True
    name = ctypes.util.find_library("c")
    if os.name != "posix" or name is None:
        return False
    try:
        libc = ctypes.CDLL(name)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    ok = mallopt(_M_MMAP_THRESHOLD, threshold) == 1 and mallopt(_M_TRIM_THRESHOLD, threshold) == 1
    _tuned = ok
    return ok


def limit_threads(n):
    """Cap BLAS threads for this process; no-op when threadpoolctl is absent."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=n)
