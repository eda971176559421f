from __future__ import annotations

import enum
from dataclasses import dataclass


class PacketKind(enum.Enum):
    DATA = "DATA"
    ACK = "ACK"


@dataclass(slots=True)
class Packet:
    """A DATA segment or an ACK.

    ``ts_enqueued`` / ``ts_dequeued`` are stamped by the bottleneck queue only.
    ACKs carry the receiver's cumulative ack, up to three SACK ranges
    (inclusive ``(first, last)`` segment numbers) and an echo of the sending
    time of the DATA packet that triggered them.
    """

    flow_id: int
    seq: int
    size: int
    kind: PacketKind = PacketKind.DATA
    ts_sent: float | None = None
    ts_enqueued: float | None = None
    ts_dequeued: float | None = None
    ts_delivered: float | None = None
    retransmission: bool = False
    cum_ack: int = 0
    sack: tuple = ()
    ts_echo: float | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"packet size must be > 0, got {self.size}")
