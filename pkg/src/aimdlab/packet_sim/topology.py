"""Dumbbell topology: N senders, two routers joined by the bottleneck, N receivers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from aimdlab.errors import ConfigError
from aimdlab.packet_sim.events import EventKind, EventQueue
from aimdlab.packet_sim.packet import Packet, PacketKind
from aimdlab.packet_sim.queue import DropTailQueue, EnqueueResult, enqueue_droptail, serialize_delay


@dataclass(frozen=True)
class LinkSpec:
    bandwidth: float  # bits/s
    propagation_delay: float  # s
    queue_capacity: int  # packets

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError("link_bandwidth", "bandwidth must be > 0")
        if self.propagation_delay < 0:
            raise ConfigError("link_distance", "propagation delay must be >= 0")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity", "queue_capacity must be >= 1")


class Channel:
    """One direction of a link: a DropTail queue feeding a store-and-forward wire.

    When ``byte_bins`` is set, bytes put on the wire are credited to 1 s bins
    in proportion to how much of each transmission falls inside the bin, up
    to ``account_until``.
    """

    def __init__(self, name: str, src: "Node", dst: "Node", spec: LinkSpec, events: EventQueue,
                 stamp: bool = False, log: bool = False):
        self.name = name
        self.src = src
        self.dst = dst
        self.spec = spec
        self.events = events
        self.queue = DropTailQueue(spec.queue_capacity, name, stamp=stamp, log=log)
        self.busy = False
        self.bytes_sent = 0
        self.byte_bins: list[float] | None = None
        self.account_until = math.inf

    def transmit(self, p: Packet) -> EnqueueResult:
        now = self.events.now
        result = enqueue_droptail(self.queue, p, now)
        if result is EnqueueResult.ACCEPTED and not self.busy:
            self._start_next(now)
        return result

    def _start_next(self, now: float) -> None:
        p = self.queue.dequeue(now)
        self.busy = True
        done = now + serialize_delay(p.size, self.spec.bandwidth)
        self.bytes_sent += p.size
        if self.byte_bins is not None:
            self._credit(now, done, p.size)
        self.events.schedule(done, EventKind.TRANSMIT_COMPLETE, self, p)

    def _credit(self, t0: float, t1: float, size: float) -> None:
        end = min(t1, self.account_until)
        if end <= t0:
            return
        rate = size / (t1 - t0)
        b = int(t0)
        while b < end:
            lo, hi = max(t0, b), min(end, b + 1)
            while len(self.byte_bins) <= b:
                self.byte_bins.append(0.0)
            self.byte_bins[b] += rate * (hi - lo)
            b += 1

    def on_transmit_complete(self, p: Packet) -> None:
        now = self.events.now
        self.events.schedule(now + self.spec.propagation_delay, EventKind.LINK_ARRIVAL, self.dst, p)
        self.busy = False
        if len(self.queue):
            self._start_next(now)


@dataclass(eq=False)
class Node:
    name: str
    routes: dict = field(default_factory=dict)  # (PacketKind, flow_id) -> Channel
    endpoint: object = None

    def route(self, p: Packet) -> Channel:
        return self.routes[(p.kind, p.flow_id)]


@dataclass(frozen=True)
class DuplexLink:
    name: str
    forward: Channel
    reverse: Channel


@dataclass
class Dumbbell:
    senders: list
    receivers: list
    r1: Node
    r2: Node
    links: list
    events: EventQueue

    @property
    def nodes(self) -> list:
        return [*self.senders, self.r1, self.r2, *self.receivers]

    @property
    def bottleneck(self) -> Channel:
        return self.links[len(self.senders)].forward

    def channels(self) -> list:
        return [c for link in self.links for c in (link.forward, link.reverse)]


def link_spec(config) -> LinkSpec:
    return LinkSpec(config.link_bandwidth, config.propagation_delay, config.queue_capacity)


def build_dumbbell(config, events: EventQueue | None = None) -> Dumbbell:
    """S_i -> R1 -> (bottleneck) -> R2 -> D_i, with a reverse channel per link for ACKs.

    Every link uses the scenario's link spec.  Only the R1 -> R2 queue stamps
    packet timestamps and logs its samples.
    """
    n_flows = config.n_flows
    spec = link_spec(config)
    if events is None:
        events = EventQueue()
    if n_flows < 1:
        raise ConfigError("n_flows", "a dumbbell needs at least one flow")
    senders = [Node(f"S{i + 1}") for i in range(n_flows)]
    receivers = [Node(f"D{i + 1}") for i in range(n_flows)]
    r1, r2 = Node("R1"), Node("R2")

    def duplex(a: Node, b: Node, **kw) -> DuplexLink:
        return DuplexLink(
            f"{a.name}-{b.name}",
            Channel(f"{a.name}->{b.name}", a, b, spec, events, **kw),
            Channel(f"{b.name}->{a.name}", b, a, spec, events),
        )

    access_in = [duplex(s, r1) for s in senders]
    core = duplex(r1, r2, stamp=True, log=True)
    access_out = [duplex(r2, d) for d in receivers]

    for i in range(n_flows):
        senders[i].routes[(PacketKind.DATA, i)] = access_in[i].forward
        r1.routes[(PacketKind.DATA, i)] = core.forward
        r2.routes[(PacketKind.DATA, i)] = access_out[i].forward
        receivers[i].routes[(PacketKind.ACK, i)] = access_out[i].reverse
        r2.routes[(PacketKind.ACK, i)] = core.reverse
        r1.routes[(PacketKind.ACK, i)] = access_in[i].reverse

    return Dumbbell(senders, receivers, r1, r2, [*access_in, core, *access_out], events)
