"""Single-threaded discrete-event loop with FIFO tie-breaking."""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable


class InvariantViolation(RuntimeError):
    pass


class Simulator:
    def __init__(self, horizon_ms: float = float("inf")):
        self.now = 0.0
        self.horizon_ms = horizon_ms
        self._queue: list[tuple[float, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()
        self.events_run = 0
        self.truncated = False

    def schedule(self, delay: float, callback: Callable[..., Any], *args) -> None:
        if delay < 0:
            raise InvariantViolation(f"event scheduled {delay} ms in the past")
        heapq.heappush(self._queue, (self.now + delay, next(self._seq), callback, args))

    def schedule_at(self, time: float, callback: Callable[..., Any], *args) -> None:
        self.schedule(time - self.now, callback, *args)

    def pending(self) -> int:
        return len(self._queue)

    def run(self) -> float:
        queue = self._queue
        while queue:
            time, _, callback, args = heapq.heappop(queue)
            if time > self.horizon_ms:
                self.truncated = True
                queue.clear()
                break
            if time < self.now:
                raise InvariantViolation("clock moved backwards")
            self.now = time
            self.events_run += 1
            callback(*args)
        return self.now
