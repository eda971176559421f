"""Simplified SACK transport driving the congestion policy.

The sender has no slow start: it opens at the policy's initial window and
only ever runs congestion avoidance.  Loss is detected by duplicate ACKs,
by a SACK-reported gap, or by the retransmission timer.  Each detection
opens a recovery episode that applies exactly one decrease; further losses
inside the same flight are repaired without cutting the window again, and
the window does not grow until the episode ends.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right

from aimdlab.congestion_policy import AckMode, PolicyState, on_loss_event, on_round_ack
from aimdlab.errors import ProtocolError
from aimdlab.packet_sim.packet import Packet, PacketKind

MAX_SACK_BLOCKS = 3
DUPACK_THRESHOLD = 3


class IntervalSet:
    """Set of integers stored as sorted, disjoint, non-adjacent closed ranges."""

    def __init__(self):
        self._starts: list[int] = []
        self._ends: list[int] = []

    def __bool__(self):
        return bool(self._starts)

    def __contains__(self, x: int) -> bool:
        i = bisect_right(self._starts, x) - 1
        return i >= 0 and self._ends[i] >= x

    def ranges(self) -> list[tuple[int, int]]:
        return list(zip(self._starts, self._ends))

    def max(self) -> int | None:
        return self._ends[-1] if self._ends else None

    def add(self, a: int, b: int | None = None) -> None:
        if b is None:
            b = a
        i = bisect_left(self._ends, a - 1)
        j = bisect_right(self._starts, b + 1)
        if i < j:
            a = min(a, self._starts[i])
            b = max(b, self._ends[j - 1])
        self._starts[i:j] = [a]
        self._ends[i:j] = [b]

    def discard_through(self, x: int) -> None:
        """Remove every member <= x."""
        i = bisect_right(self._ends, x)
        del self._starts[:i]
        del self._ends[:i]
        if self._starts and self._starts[0] <= x:
            self._starts[0] = x + 1

    def pop_prefix(self, x: int) -> int | None:
        """If ``x`` starts the first range, remove that range and return its end."""
        if self._starts and self._starts[0] == x:
            self._starts.pop(0)
            return self._ends.pop(0)
        return None

    def next_missing(self, x: int) -> int:
        i = bisect_right(self._starts, x) - 1
        if i >= 0 and self._ends[i] >= x:
            return self._ends[i] + 1
        return x

    def block_containing(self, x: int) -> tuple[int, int] | None:
        i = bisect_right(self._starts, x) - 1
        if i >= 0 and self._ends[i] >= x:
            return self._starts[i], self._ends[i]
        return None


def window_limit(cwnd: float) -> int:
    """Whole segments allowed in flight; tolerates float drift from per-ACK sums."""
    return math.floor(cwnd + 1e-9)


class TransportSender:
    """One bulk-transfer sender (segments are numbered from 1).

    ``total_segments=None`` makes the flow greedy.  Methods return the packets
    to put on the wire; the caller owns the clock, so the retransmission timer
    is exposed as ``timer_deadline`` for the caller to schedule.
    """

    def __init__(
        self,
        flow_id: int,
        policy: PolicyState,
        total_segments: int | None,
        mss: int = 1000,
        last_segment_size: int | None = None,
        min_rto: float = 0.2,
        max_rto: float = 60.0,
        initial_rto: float = 1.0,
    ):
        self.flow_id = flow_id
        self.policy = policy
        self.total_segments = total_segments
        self.mss = mss
        self.last_segment_size = last_segment_size or mss
        self.min_rto = min_rto
        self.max_rto = max_rto
        self.rto = initial_rto
        self.srtt: float | None = None
        self.rttvar: float | None = None

        self.highest_sent = 0
        self.cum_acked = 0
        self.dupack_count = 0
        self.in_recovery = False
        self.recover = 0
        self.sacked = IntervalSet()
        self._rexmit_next = 1
        self.timer_deadline: float | None = None

        self.recovery_episodes = 0
        self.timeouts = 0
        self.retransmissions = 0
        self.cwnd_log: list[tuple[float, float]] = []

    @property
    def outstanding(self) -> int:
        return self.highest_sent - self.cum_acked

    @property
    def done(self) -> bool:
        return self.total_segments is not None and self.cum_acked >= self.total_segments

    def _has_new_data(self) -> bool:
        return self.total_segments is None or self.highest_sent < self.total_segments

    def _segment(self, seq: int, now: float, retransmission: bool = False) -> Packet:
        size = self.last_segment_size if seq == self.total_segments else self.mss
        return Packet(self.flow_id, seq, size, PacketKind.DATA, ts_sent=now, retransmission=retransmission)

    def start(self, now: float) -> list[Packet]:
        return self._fill_window(now)

    def _fill_window(self, now: float) -> list[Packet]:
        out = []
        limit = window_limit(self.policy.cwnd)
        while self._has_new_data() and self.outstanding < limit:
            self.highest_sent += 1
            out.append(self._segment(self.highest_sent, now))
        if self.outstanding > 0 and self.timer_deadline is None:
            self.timer_deadline = now + self.rto
        return out

    def _rtt_sample(self, r: float) -> None:
        if self.srtt is None:
            self.srtt = r
            self.rttvar = r / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - r)
            self.srtt = 0.875 * self.srtt + 0.125 * r
        self.rto = min(self.max_rto, max(self.min_rto, self.srtt + 4 * self.rttvar))

    def _decrease(self, now: float) -> None:
        self.policy = on_loss_event(self.policy)
        self.recovery_episodes += 1
        self.in_recovery = True
        self.recover = self.highest_sent
        self._rexmit_next = self.cum_acked + 1
        self.cwnd_log.append((now, self.policy.cwnd))

    def _next_hole(self) -> int | None:
        s = max(self._rexmit_next, self.cum_acked + 1)
        limit = min(self.recover, self.highest_sent)
        s = self.sacked.next_missing(s)
        if s > limit:
            return None
        top = self.sacked.max()
        # holes above the highest SACKed segment have no loss evidence yet
        if s == self.cum_acked + 1 or (top is not None and s < top):
            return s
        return None

    def _retransmit_hole(self, now: float) -> list[Packet]:
        s = self._next_hole()
        if s is None:
            return []
        self._rexmit_next = s + 1
        self.retransmissions += 1
        return [self._segment(s, now, retransmission=True)]

    def on_ack(self, ack: Packet, now: float) -> list[Packet]:
        if ack.kind is not PacketKind.ACK:
            raise ProtocolError(f"flow {self.flow_id}: sender got a {ack.kind.value} packet")
        if ack.cum_ack > self.highest_sent:
            raise ProtocolError(
                f"flow {self.flow_id}: ACK {ack.cum_ack} for unsent data (highest sent {self.highest_sent})"
            )
        for a, b in ack.sack:
            if b > self.highest_sent:
                raise ProtocolError(f"flow {self.flow_id}: SACK block ({a}, {b}) covers unsent data")
            if b > ack.cum_ack:
                self.sacked.add(max(a, ack.cum_ack + 1), b)

        out: list[Packet] = []
        if ack.cum_ack > self.cum_acked:
            newly = ack.cum_ack - self.cum_acked
            self.cum_acked = ack.cum_ack
            self.sacked.discard_through(self.cum_acked)
            self.dupack_count = 0
            if ack.ts_echo is not None:
                self._rtt_sample(now - ack.ts_echo)
            if not self.in_recovery:
                for _ in range(newly):
                    self.policy = on_round_ack(self.policy, AckMode.PER_ACK)
            if self.in_recovery:
                if self.cum_acked >= self.recover:
                    self.in_recovery = False
                else:
                    out += self._retransmit_hole(now)
            self.timer_deadline = now + self.rto if self.outstanding > 0 else None
        elif ack.cum_ack == self.cum_acked and self.outstanding > 0:
            self.dupack_count += 1
            if not self.in_recovery:
                if self.dupack_count >= DUPACK_THRESHOLD or self.sacked:
                    self._decrease(now)
                    out += self._retransmit_hole(now)
            else:
                out += self._retransmit_hole(now)

        out += self._fill_window(now)
        return out

    def on_timer_expiry(self, now: float) -> list[Packet]:
        if self.outstanding == 0:
            self.timer_deadline = None
            return []
        self.timeouts += 1
        self._decrease(now)
        self.dupack_count = 0
        self.rto = min(self.max_rto, self.rto * 2)
        out = self._retransmit_hole(now)
        self.timer_deadline = now + self.rto
        return out


class TransportReceiver:
    """Cumulative-ACK receiver reporting up to three SACK ranges.

    Every DATA arrival is answered by exactly one ACK.  In-order data goes to
    the application once; duplicates are counted and discarded.
    """

    def __init__(self, flow_id: int, total_segments: int | None = None, mss: int = 1000,
                 last_segment_size: int | None = None, ack_size: int = 40, keep_log: bool = False):
        self.flow_id = flow_id
        self.total_segments = total_segments
        self.mss = mss
        self.last_segment_size = last_segment_size or mss
        self.ack_size = ack_size
        self.cum_ack = 0
        self.out_of_order = IntervalSet()
        self.duplicates = 0
        self.delivered_segments = 0
        self.bytes_delivered = 0
        self.delivery_errors = 0
        self.completion_time: float | None = 0.0 if total_segments == 0 else None
        self.app_log: list[int] | None = [] if keep_log else None

    def _deliver(self, seq: int, now: float) -> None:
        if seq != self.delivered_segments + 1:
            self.delivery_errors += 1
        self.delivered_segments = seq
        self.bytes_delivered += self.last_segment_size if seq == self.total_segments else self.mss
        if self.app_log is not None:
            self.app_log.append(seq)
        if seq == self.total_segments:
            self.completion_time = now

    def on_data(self, p: Packet, now: float) -> Packet:
        if p.kind is not PacketKind.DATA:
            raise ProtocolError(f"flow {self.flow_id}: receiver got a {p.kind.value} packet")
        seq = p.seq
        if seq <= self.cum_ack or seq in self.out_of_order:
            self.duplicates += 1
        elif seq == self.cum_ack + 1:
            self.cum_ack = seq
            self._deliver(seq, now)
            end = self.out_of_order.pop_prefix(seq + 1)
            if end is not None:
                for s in range(seq + 1, end + 1):
                    self._deliver(s, now)
                self.cum_ack = end
        else:
            self.out_of_order.add(seq)
        return Packet(
            self.flow_id,
            seq,
            self.ack_size,
            PacketKind.ACK,
            ts_sent=now,
            cum_ack=self.cum_ack,
            sack=self._sack_blocks(seq),
            ts_echo=p.ts_sent,
        )

    def _sack_blocks(self, latest: int) -> tuple:
        if not self.out_of_order:
            return ()
        first = self.out_of_order.block_containing(latest)
        blocks = [first] if first else []
        for r in reversed(self.out_of_order.ranges()):
            if len(blocks) >= MAX_SACK_BLOCKS:
                break
            if r != first:
                blocks.append(r)
        return tuple(blocks)
