"""Event-driven simulation kernel.

Time is an integer count of microseconds.  Events are ordered by
``(time, priority, seq)``; ``seq`` is assigned at scheduling time so events
at the same instant and priority run in insertion order.
"""
from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, TextIO

import numpy as np

US_PER_MS = 1000
US_PER_SUBFRAME = 1000


def ms(value: float) -> int:
    """Convert milliseconds to integer ticks, refusing sub-microsecond values."""
    ticks = round(value * US_PER_MS)
    if abs(ticks - value * US_PER_MS) > 1e-6:
        raise ValueError(f"{value} ms is not a whole number of microseconds")
    return int(ticks)


def subframe_start(t: int) -> int:
    return t * US_PER_SUBFRAME


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current time."""


@dataclass(order=True)
class Event:
    time: int
    priority: int
    seq: int
    target: str = field(compare=False)
    payload: Any = field(compare=False)
    action: Optional[Callable[[], Any]] = field(compare=False, default=None, repr=False)


class Simulator:
    def __init__(self, trace: Optional[TextIO] = None):
        self._queue: list[Event] = []
        self._seq = 0
        self._now = 0
        self.trace = trace
        self.executed = 0

    def now(self) -> int:
        return self._now

    def schedule(self, time: int, target: str, payload: Any = None,
                 action: Optional[Callable[[], Any]] = None, priority: int = 0) -> int:
        if time < self._now:
            raise SchedulingError(
                f"event for {target} at {time} us scheduled in the past (now={self._now})")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, Event(int(time), priority, seq, target, payload, action))
        return seq

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, end: int) -> int:
        """Execute every event with ``time <= end``; return how many ran."""
        count = 0
        while self._queue and self._queue[0].time <= end:
            ev = heapq.heappop(self._queue)
            self._now = ev.time
            if self.trace is not None:
                self.trace.write(f"{ev.time}\t{ev.target}\t{ev.payload}\n")
            if ev.action is not None:
                ev.action()
            count += 1
        self._now = max(self._now, end)
        self.executed += count
        return count


class RngStream:
    """A named random stream; independent of every other stream of the run."""

    def __init__(self, seed: int, stream_id: str):
        self.stream_id = stream_id
        key = zlib.crc32(stream_id.encode("utf-8"))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))

    def uniform(self, a: float, b: float) -> float:
        if not b >= a:
            raise ValueError(f"uniform({a}, {b}): empty interval")
        return float(self._gen.uniform(a, b))

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` inclusive."""
        if hi < lo:
            raise ValueError(f"integers({lo}, {hi}): empty range")
        return int(self._gen.integers(lo, hi, endpoint=True))

    def bernoulli(self, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli({p}): probability out of range")
        # always consume one draw so stream alignment does not depend on p
        u = self._gen.random()
        return bool(u < p)

    def normal(self, mu: float, sigma: float, lo: float = -np.inf, hi: float = np.inf) -> float:
        """Normal draw clamped (not resampled) to ``[lo, hi]``."""
        if sigma < 0 or lo > hi:
            raise ValueError(f"normal({mu}, {sigma}) clipped to [{lo}, {hi}] is invalid")
        x = mu + sigma * float(self._gen.standard_normal())
        return min(max(x, lo), hi)


class RngStreams:
    """Lazily created named streams sharing one run seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def __getitem__(self, stream_id: str) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]


def rng_draw(stream: RngStream, dist: tuple) -> float | bool:
    """Draw from ``dist``: ``("uniform", a, b)``, ``("bernoulli", p)`` or
    ``("normal", mu, sigma, lo, hi)``."""
    kind, *args = dist
    if kind == "uniform":
        return stream.uniform(*args)
    if kind == "bernoulli":
        return stream.bernoulli(*args)
    if kind == "normal":
        return stream.normal(*args)
    raise ValueError(f"unknown distribution {kind!r}")
