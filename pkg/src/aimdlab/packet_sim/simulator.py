"""Event loop tying the dumbbell, the transports and the policy together."""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field

from aimdlab.config import ScenarioConfig
from aimdlab.congestion_policy import PolicyParams, policy_init
from aimdlab.errors import SimulationError
from aimdlab.metrics import summarize
from aimdlab.packet_sim.events import EventKind, EventQueue
from aimdlab.packet_sim.packet import Packet, PacketKind
from aimdlab.packet_sim.topology import build_dumbbell
from aimdlab.packet_sim.transport import TransportReceiver, TransportSender, window_limit

EVENT_CSV_COLUMNS = ("time", "node", "event_kind", "flow", "seq", "queue_occupancy")
QUEUE_CSV_COLUMNS = ("time_s", "queue_packets", "queue_bytes")


@dataclass(frozen=True)
class DeliveryRecord:
    flow_id: int
    seq: int
    ts_sent: float
    ts_enqueued: float | None
    ts_dequeued: float | None
    ts_delivered: float
    retransmission: bool


@dataclass
class FlowStats:
    flow_id: int
    start_time: float
    bytes_total: int | None
    bytes_delivered: int
    segments_delivered: int
    completion_time: float | None
    loss_events: int
    recovery_episodes: int
    timeouts: int
    retransmissions: int
    outstanding_violations: int
    duplicates: int
    delivery_errors: int
    final_cwnd: float
    cwnd_log: list
    app_log: list | None = None


@dataclass(frozen=True)
class QueueCounters:
    enqueued: int
    dequeued: int
    dropped: int
    occupancy: int
    max_occupancy: int
    capacity: int


@dataclass
class Trace:
    config: ScenarioConfig
    end_time: float
    base_rtt: float
    bottleneck_bandwidth: float
    bottleneck_byte_bins: list
    bottleneck_bytes: int
    queue_samples: list
    bottleneck_delays: list
    deliveries: list
    flows: list
    queues: dict
    events: list | None = None
    timestamp_violations: int = 0

    @property
    def drops(self) -> dict:
        return {name: q.dropped for name, q in self.queues.items()}

    @property
    def completion_time(self) -> float | None:
        times = [f.completion_time for f in self.flows]
        if self.config.greedy or any(t is None for t in times):
            return None
        return max(times)

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_CSV_COLUMNS)
        for row in self.events or ():
            w.writerow([repr(row[0]), *row[1:]])
        return buf.getvalue()

    def queue_samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(QUEUE_CSV_COLUMNS)
        for s in self.queue_samples:
            w.writerow([repr(s[0]), s[1], s[2]])
        return buf.getvalue()

    def fingerprint(self) -> tuple:
        """Everything observable about the run, for bit-identical comparisons."""
        return (
            self.end_time,
            tuple(self.queue_samples),
            tuple(self.bottleneck_delays),
            tuple(self.deliveries),
            tuple(self.bottleneck_byte_bins),
            tuple((f.flow_id, f.completion_time, f.final_cwnd, tuple(f.cwnd_log)) for f in self.flows),
        )


def _segments(nbytes: int, mss: int) -> tuple[int, int]:
    if nbytes == 0:
        return 0, mss
    n = math.ceil(nbytes / mss)
    return n, nbytes - (n - 1) * mss


class Simulation:
    """One isolated, single-threaded run of a :class:`ScenarioConfig`."""

    def __init__(self, config: ScenarioConfig, keep_app_log: bool = False):
        self.config = config
        self.events = EventQueue()
        self.net = build_dumbbell(config, self.events)
        self.bottleneck = self.net.bottleneck
        self.bottleneck.byte_bins = []
        if config.greedy:
            self.bottleneck.account_until = config.sim_duration
        self.deliveries: list[DeliveryRecord] = []
        self.event_rows: list | None = [] if config.record_events else None
        self.timestamp_violations = 0
        self._timer_pending: list[set] = []
        self.outstanding_violations = [0] * config.n_flows

        rng = random.Random(config.seed)
        sizes = [None] * config.n_flows if config.greedy else config.flow_bytes()
        params = PolicyParams(
            additive_step=config.additive_step,
            initial_window=config.initial_window,
            min_window=1,
            mss=config.mss,
        )
        self.senders: list[TransportSender] = []
        self.receivers: list[TransportReceiver] = []
        self.start_times: list[float] = []
        for i in range(config.n_flows):
            if sizes[i] is None:
                total, last = None, config.mss
            else:
                total, last = _segments(sizes[i], config.mss)
            sender = TransportSender(
                i,
                policy_init(config.policy, params),
                total,
                mss=config.mss,
                last_segment_size=last,
                min_rto=config.min_rto,
                initial_rto=config.initial_rto,
            )
            receiver = TransportReceiver(
                i, total, mss=config.mss, last_segment_size=last, ack_size=config.ack_size, keep_log=keep_app_log
            )
            self.net.senders[i].endpoint = sender
            self.net.receivers[i].endpoint = receiver
            self.senders.append(sender)
            self.receivers.append(receiver)
            self._timer_pending.append(set())
            start = config.start_time
            if config.start_jitter > 0:
                start += rng.uniform(0.0, config.start_jitter)
            self.start_times.append(start)
            if receiver.completion_time is not None:
                receiver.completion_time = start
            self.events.schedule(start, EventKind.APP_SEND, sender)

    # -- event handlers -------------------------------------------------

    def _emit(self, sender: TransportSender, packets: list[Packet]) -> None:
        channel = self.net.senders[sender.flow_id].routes[(PacketKind.DATA, sender.flow_id)]
        for p in packets:
            channel.transmit(p)
        # new data may only leave while the flight fits the window
        if any(not p.retransmission for p in packets) and sender.outstanding > window_limit(sender.policy.cwnd):
            self.outstanding_violations[sender.flow_id] += 1
        d = sender.timer_deadline
        pending = self._timer_pending[sender.flow_id]
        if d is not None and (not pending or d < min(pending)):
            pending.add(d)
            self.events.schedule(d, EventKind.TIMER_EXPIRY, sender, d)

    def _arrive(self, node, p: Packet) -> None:
        now = self.events.now
        ep = node.endpoint
        if ep is None:
            node.route(p).transmit(p)
        elif p.kind is PacketKind.DATA:
            p.ts_delivered = now
            if not (p.ts_sent <= (p.ts_enqueued or p.ts_sent) <= (p.ts_dequeued or p.ts_sent) <= now):
                self.timestamp_violations += 1
            self.deliveries.append(
                DeliveryRecord(p.flow_id, p.seq, p.ts_sent, p.ts_enqueued, p.ts_dequeued, now, p.retransmission)
            )
            ack = ep.on_data(p, now)
            node.route(ack).transmit(ack)
        else:
            self._emit(ep, ep.on_ack(p, now))

    def _on_timer(self, sender: TransportSender, when: float) -> None:
        self._timer_pending[sender.flow_id].discard(when)
        d = sender.timer_deadline
        if d is None:
            return
        if d <= self.events.now:
            self._emit(sender, sender.on_timer_expiry(self.events.now))
        else:
            self._emit(sender, [])

    def _record(self, ev) -> None:
        kind = ev.kind
        if kind is EventKind.LINK_ARRIVAL:
            row = (ev.time, ev.target.name, kind.value, ev.payload.flow_id, ev.payload.seq, 0)
        elif kind is EventKind.TRANSMIT_COMPLETE:
            row = (ev.time, ev.target.src.name, kind.value, ev.payload.flow_id, ev.payload.seq, len(ev.target.queue))
        else:
            row = (ev.time, self.net.senders[ev.target.flow_id].name, kind.value, ev.target.flow_id, ev.target.highest_sent, 0)
        self.event_rows.append(row)

    def _all_done(self) -> bool:
        return all(s.done for s in self.senders)

    # -- main loop ------------------------------------------------------

    def run(self) -> Trace:
        cfg = self.config
        events = self.events
        horizon = cfg.sim_duration if cfg.greedy else cfg.max_sim_time
        end_time = None
        if not cfg.greedy and self._all_done():
            end_time = cfg.start_time if cfg.start_jitter == 0 else max(self.start_times)
        while end_time is None:
            t = events.peek_time()
            if t is None:
                raise SimulationError(f"event loop stalled at t={events.now} with transfers incomplete")
            if t > horizon:
                if cfg.greedy:
                    end_time = horizon
                    break
                raise SimulationError(f"transfers not finished by max_sim_time={horizon} s")
            ev = events.pop()
            if self.event_rows is not None:
                self._record(ev)
            match ev.kind:
                case EventKind.LINK_ARRIVAL:
                    self._arrive(ev.target, ev.payload)
                case EventKind.TRANSMIT_COMPLETE:
                    ev.target.on_transmit_complete(ev.payload)
                case EventKind.TIMER_EXPIRY:
                    self._on_timer(ev.target, ev.payload)
                case EventKind.APP_SEND:
                    self._emit(ev.target, ev.target.start(events.now))
                case _:
                    raise SimulationError(f"unhandled event kind {ev.kind!r}")
            if not cfg.greedy and self._all_done():
                end_time = events.now
        return self._trace(end_time)

    def _trace(self, end_time: float) -> Trace:
        cfg = self.config
        flows = []
        for i, (s, r) in enumerate(zip(self.senders, self.receivers)):
            flows.append(
                FlowStats(
                    flow_id=i,
                    start_time=self.start_times[i],
                    bytes_total=None if cfg.greedy else cfg.flow_bytes()[i],
                    bytes_delivered=r.bytes_delivered,
                    segments_delivered=r.delivered_segments,
                    completion_time=r.completion_time,
                    loss_events=s.policy.loss_events,
                    recovery_episodes=s.recovery_episodes,
                    timeouts=s.timeouts,
                    retransmissions=s.retransmissions,
                    outstanding_violations=self.outstanding_violations[i],
                    duplicates=r.duplicates,
                    delivery_errors=r.delivery_errors,
                    final_cwnd=s.policy.cwnd,
                    cwnd_log=list(s.cwnd_log),
                    app_log=r.app_log,
                )
            )
        queues = {
            c.name: QueueCounters(
                c.queue.enqueued, c.queue.dequeued, c.queue.dropped, len(c.queue), c.queue.max_occupancy, c.queue.capacity
            )
            for c in self.net.channels()
        }
        bins = list(self.bottleneck.byte_bins)
        n_bins = int(math.floor(cfg.sim_duration)) if cfg.greedy else int(math.ceil(end_time))
        bins = (bins + [0.0] * n_bins)[:n_bins]
        q = self.bottleneck.queue
        return Trace(
            config=cfg,
            end_time=end_time,
            base_rtt=cfg.base_rtt,
            bottleneck_bandwidth=cfg.link_bandwidth,
            bottleneck_byte_bins=bins,
            bottleneck_bytes=self.bottleneck.bytes_sent,
            queue_samples=list(q.samples),
            bottleneck_delays=list(q.delays),
            deliveries=self.deliveries,
            flows=flows,
            queues=queues,
            events=self.event_rows,
            timestamp_violations=self.timestamp_violations,
        )


def run_scenario(config: ScenarioConfig, keep_app_log: bool = False):
    """Run one scenario; returns ``(trace, summary_report)``."""
    trace = Simulation(config, keep_app_log=keep_app_log).run()
    return trace, summarize(trace, warmup=config.warmup, sample_interval=config.sample_interval)
