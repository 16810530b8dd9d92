"""Clocks used by the converter: a deterministic virtual one and a wall clock.

Both expose ``now_ms``, ``schedule(delay_ms, fn)`` returning a cancellable
handle, and ``spawn(fn)`` for work that should run concurrently with the
converter loop.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable


class TimerHandle:
    def __init__(self):
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class VirtualClock:
    """Time moves only when the caller advances it.

    Pending callbacks are ordered by (fire time, scheduling order), so two
    runs that schedule the same things in the same order are identical.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._heap: list[tuple[int, int, Callable[[], None], TimerHandle]] = []
        self._counter = itertools.count()

    def now_ms(self) -> int:
        return self._now

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> TimerHandle:
        if delay_ms < 0:
            raise ValueError("delay must be nonnegative")
        handle = TimerHandle()
        heapq.heappush(self._heap, (self._now + delay_ms, next(self._counter), fn, handle))
        return handle

    def spawn(self, fn: Callable[[], None]) -> TimerHandle:
        return self.schedule(0, fn)

    def next_fire_time(self) -> int | None:
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def pending(self) -> int:
        return sum(1 for entry in self._heap if not entry[3].cancelled)

    def fire_next(self) -> bool:
        """Run the earliest pending callback, moving time forward to it."""
        if self.next_fire_time() is None:
            return False
        when, _, fn, handle = heapq.heappop(self._heap)
        self._now = max(self._now, when)
        handle.cancelled = True
        fn()
        return True

    def advance_to(self, t_ms: int, after_each: Callable[[], None] | None = None):
        """Fire everything due at or before ``t_ms``, then set the time to ``t_ms``."""
        if t_ms < self._now:
            raise ValueError(f"cannot move the clock back from {self._now} to {t_ms}")
        while True:
            nxt = self.next_fire_time()
            if nxt is None or nxt > t_ms:
                break
            self.fire_next()
            if after_each is not None:
                after_each()
        self._now = t_ms


class WallClock:
    def __init__(self):
        self._t0 = time.monotonic()
        self._lock = threading.Lock()
        self._timers: set[threading.Timer] = set()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle()

        def run():
            with self._lock:
                self._timers.discard(timer)
            if not handle.cancelled:
                fn()

        timer = threading.Timer(delay_ms / 1000.0, run)
        timer.daemon = True
        orig_cancel = handle.cancel

        def cancel():
            orig_cancel()
            timer.cancel()

        handle.cancel = cancel
        with self._lock:
            self._timers.add(timer)
        timer.start()
        return handle

    def spawn(self, fn: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle()
        threading.Thread(target=fn, daemon=True).start()
        return handle

    def cancel_all(self):
        with self._lock:
            timers = list(self._timers)
            self._timers.clear()
        for t in timers:
            t.cancel()
