"""Deterministic discrete-event engine.

Events execute in (timestamp, sequence) order; the sequence number is
assigned at scheduling time, so ties resolve in scheduling order and a
run is fully reproducible for a fixed seed and event program.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable


class CausalityError(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(order=True, slots=True)
class SimEvent:
    time: float
    seq: int
    action: Callable[[], None] = field(compare=False)
    label: str = field(compare=False, default="")
    cancelled: bool = field(compare=False, default=False)


class Simulator:
    """Event queue with a monotonically advancing clock."""

    def __init__(self) -> None:
        self.now = 0.0
        self._queue: list[SimEvent] = []
        self._seq = 0
        self.executed = 0

    def schedule(self, time: float, action: Callable[[], None], label: str = "") -> SimEvent:
        """Queue `action` at absolute `time`. Past times are a causality violation."""
        if time < self.now:
            raise CausalityError(f"event at t={time} is before the clock t={self.now}")
        event = SimEvent(time, self._seq, action, label)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: float, action: Callable[[], None], label: str = "") -> SimEvent:
        if delay < 0:
            raise CausalityError(f"negative delay {delay}")
        return self.schedule(self.now + delay, action, label)

    def run_until(self, t_end: float) -> int:
        """Execute every event with timestamp <= t_end, then set the clock to t_end.

        Returns the number of events executed by this call.  Calling again
        with the same t_end is a no-op.
        """
        if t_end < self.now:
            raise CausalityError(f"run_until({t_end}) behind the clock t={self.now}")
        ran = 0
        queue = self._queue
        while queue and queue[0].time <= t_end:
            event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self.now = event.time
            event.action()
            ran += 1
        self.now = t_end
        self.executed += ran
        return ran

    @property
    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)
