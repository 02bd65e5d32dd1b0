"""Process-level tuning for the many mid-sized temporaries of the sweeps."""

import ctypes
import ctypes.util
import logging

log = logging.getLogger(__name__)

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator() -> bool:
    """Keep freed arrays in the glibc heap instead of unmapping them.

    Each contraction allocates arrays of a few hundred KB; by default glibc
    serves these with fresh mmaps, and the resulting page faults cost about
    a third of training time. No-op (returns False) off glibc.
    """
    global _done
    if _done:
        return True
    name = ctypes.util.find_library("c")
    try:
        libc = ctypes.CDLL(name or "libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    ok = all(mallopt(opt, val) == 1 for opt, val in (
        (_M_MMAP_THRESHOLD, 64 << 20), (_M_TRIM_THRESHOLD, 256 << 20), (_M_TOP_PAD, 64 << 20)))
    if not ok:
        log.debug("mallopt rejected allocator settings")
    _done = ok
    return ok
