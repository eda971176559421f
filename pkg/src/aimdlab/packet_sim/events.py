"""Time-ordered event queue with deterministic tie-breaking."""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass
from typing import Any

from aimdlab.errors import SimulationError


class EventKind(enum.Enum):
    LINK_ARRIVAL = "link_arrival"
    TRANSMIT_COMPLETE = "transmit_complete"
    TIMER_EXPIRY = "timer_expiry"
    APP_SEND = "app_send"


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind
    target: Any
    payload: Any = None


class EventQueue:
    """Min-heap of events keyed by ``(time, schedule order)``.

    Events scheduled for the same instant run in the order they were
    scheduled, which is what makes repeated runs bit-identical.
    """

    def __init__(self):
        self.now = 0.0
        self._heap: list = []
        self._counter = itertools.count()

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: float, kind: EventKind, target, payload=None) -> Event:
        if time < self.now:
            raise SimulationError(f"event {kind.value} scheduled at {time} before now={self.now}")
        ev = Event(time, next(self._counter), kind, target, payload)
        heapq.heappush(self._heap, (time, ev.seq, ev))
        return ev

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        time, _, ev = heapq.heappop(self._heap)
        self.now = time
        return ev
