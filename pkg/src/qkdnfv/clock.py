"""Simulated and wall clocks.

Both expose ``now``, ``advance(dt)`` and ``timed(op, nbytes, fn)``. The
simulated clock charges bulk operations from a throughput table; the wall
clock runs them and measures.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

# Throughputs of the reference server: a 16 GB image took 126 s to encrypt,
# 33 s to push through a plain socket and 144 s to decrypt.
REFERENCE_IMAGE_BYTES = 16 * 10**9


@dataclass(frozen=True)
class Throughput:
    encrypt: float = REFERENCE_IMAGE_BYTES / 126.0
    send: float = REFERENCE_IMAGE_BYTES / 33.0
    decrypt: float = REFERENCE_IMAGE_BYTES / 144.0

    def duration(self, op: str, nbytes: int) -> float:
        return nbytes / getattr(self, op)


class SimClock:
    def __init__(self, start: float = 0.0, throughput: Throughput | None = None):
        self.now = float(start)
        self.throughput = throughput or Throughput()

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError(f"cannot move the clock backwards by {dt}")
        self.now += dt
        return self.now

    def advance_to(self, t: float) -> float:
        if t > self.now:
            self.now = t
        return self.now

    def timed(self, op, nbytes, fn):
        result = fn()
        dt = self.throughput.duration(op, nbytes)
        self.advance(dt)
        return result, dt


class WallClock:
    """Real time, offset so it can continue a simulated timeline."""

    def __init__(self, offset: float = 0.0):
        self._t0 = time.perf_counter()
        self.offset = offset

    @property
    def now(self) -> float:
        return self.offset + time.perf_counter() - self._t0

    def advance(self, dt: float) -> float:
        if dt > 0:
            time.sleep(dt)
        return self.now

    def advance_to(self, t: float) -> float:
        return self.advance(t - self.now)

    def timed(self, op, nbytes, fn):
        t = time.perf_counter()
        result = fn()
        return result, time.perf_counter() - t
