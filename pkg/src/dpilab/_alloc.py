"""One-shot glibc allocator tuning for allocation-heavy numeric loops.

The engine churns through ~100 KB float64 scratch buffers per op; glibc's
default mmap threshold turns each one into an mmap/munmap syscall pair, which
costs more than the arithmetic at desk scale. Raising the threshold lets the
heap recycle them (~2x faster training). Semantics are unaffected; no-op on
non-glibc platforms.
"""

from __future__ import annotations

import ctypes
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_done = False


def tune_allocator() -> None:
    global _done
    if _done:
        return
    _done = True
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 32 * 1024 * 1024)
        libc.mallopt(_M_TRIM_THRESHOLD, 128 * 1024 * 1024)
    except OSError:
        pass
