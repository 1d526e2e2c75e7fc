"""Instrumented accounting of auxiliary allocations made during a forward pass.

Kernels and layers report each buffer they allocate (message buffers, partial
sums, per-edge weights, outputs) and release it when it goes out of use. The
tracker keeps the live total and its high-water mark. Byte counts come from the
arrays themselves, so the numbers are exact and platform independent.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Optional


class AllocationLimitExceeded(MemoryError):
    def __init__(self, attempted_bytes: int, live_bytes: int, limit_bytes: int, tag: str = ""):
        super().__init__(
            f"allocating {attempted_bytes} bytes ({tag or 'untagged'}) with {live_bytes} live "
            f"would exceed the {limit_bytes}-byte limit"
        )
        self.attempted_bytes = attempted_bytes
        self.live_bytes = live_bytes
        self.limit_bytes = limit_bytes
        self.tag = tag


@dataclass
class AllocationTracker:
    limit_bytes: Optional[int] = None
    live_bytes: int = 0
    peak_bytes: int = 0
    allocations: int = 0
    by_tag: dict = field(default_factory=dict)

    def alloc(self, nbytes: int, tag: str = "") -> None:
        """Record an allocation. Call before allocating so a limit can refuse it."""
        nbytes = int(nbytes)
        if self.limit_bytes is not None and self.live_bytes + nbytes > self.limit_bytes:
            raise AllocationLimitExceeded(nbytes, self.live_bytes, self.limit_bytes, tag)
        self.live_bytes += nbytes
        self.allocations += 1
        if tag:
            self.by_tag[tag] = max(self.by_tag.get(tag, 0), nbytes)
        if self.live_bytes > self.peak_bytes:
            self.peak_bytes = self.live_bytes

    def free(self, nbytes: int) -> None:
        self.live_bytes -= int(nbytes)


_current: contextvars.ContextVar = contextvars.ContextVar("aggrbench_tracker", default=None)


@contextlib.contextmanager
def tracking(limit_bytes: Optional[int] = None):
    tracker = AllocationTracker(limit_bytes)
    token = _current.set(tracker)
    try:
        yield tracker
    finally:
        _current.reset(token)


def track_alloc(nbytes: int, tag: str = "") -> None:
    t = _current.get()
    if t is not None:
        t.alloc(nbytes, tag)


def track_free(nbytes: int) -> None:
    t = _current.get()
    if t is not None:
        t.free(nbytes)
