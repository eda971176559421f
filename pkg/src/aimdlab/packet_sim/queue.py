"""DropTail FIFO buffer."""

from __future__ import annotations

import enum
from collections import deque

from aimdlab.packet_sim.packet import Packet


class EnqueueResult(enum.Enum):
    ACCEPTED = "accepted"
    DROPPED = "dropped"


class DropTailQueue:
    """FIFO holding at most ``capacity`` packets; arrivals to a full buffer are lost.

    The packet currently on the wire is not counted: it left the queue when
    its transmission started.  ``enqueued`` counts every arrival offered to
    the queue, so ``enqueued == dequeued + dropped + occupancy`` always.

    With ``stamp`` set the queue writes ``ts_enqueued`` / ``ts_dequeued`` on
    the packets it handles.  With ``log`` set every change appends ``(time,
    packets, bytes, enqueued, dequeued, dropped)`` to ``samples`` and every
    departure appends ``(enqueue_time, dequeue_time)`` to ``delays``.
    """

    def __init__(self, capacity: int, name: str = "", stamp: bool = False, log: bool = False):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self.name = name
        self.stamp = stamp
        self._fifo: deque[tuple[Packet, float]] = deque()
        self.occupancy_bytes = 0
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0
        self.max_occupancy = 0
        self.samples: list | None = [] if log else None
        self.delays: list | None = [] if log else None

    def __len__(self):
        return len(self._fifo)

    @property
    def occupancy_packets(self) -> int:
        return len(self._fifo)

    def conserved(self) -> bool:
        return self.enqueued == self.dequeued + self.dropped + len(self._fifo)

    def _record(self, now):
        if self.samples is not None:
            self.samples.append(
                (now, len(self._fifo), self.occupancy_bytes, self.enqueued, self.dequeued, self.dropped)
            )

    def dequeue(self, now: float) -> Packet:
        p, t_in = self._fifo.popleft()
        self.occupancy_bytes -= p.size
        self.dequeued += 1
        if self.stamp:
            p.ts_dequeued = now
        if self.delays is not None:
            self.delays.append((t_in, now))
        self._record(now)
        return p


def enqueue_droptail(q: DropTailQueue, p: Packet, now: float) -> EnqueueResult:
    q.enqueued += 1
    if len(q._fifo) >= q.capacity:
        q.dropped += 1
        q._record(now)
        return EnqueueResult.DROPPED
    q._fifo.append((p, now))
    q.occupancy_bytes += p.size
    if len(q._fifo) > q.max_occupancy:
        q.max_occupancy = len(q._fifo)
    if q.stamp:
        p.ts_enqueued = now
    q._record(now)
    return EnqueueResult.ACCEPTED


def serialize_delay(size: float, bandwidth: float) -> float:
    """Seconds to clock ``size`` bytes onto a link of ``bandwidth`` bits/s."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    return size * 8 / bandwidth
