from types import SimpleNamespace

import pytest

from aimdlab import ConfigError, PolicyKind, PolicyParams, ProtocolError, SimulationError, policy_init
from aimdlab.config import ScenarioConfig
from aimdlab.congestion_policy import PolicyState
from aimdlab.packet_sim import (
    DropTailQueue,
    EnqueueResult,
    EventKind,
    EventQueue,
    IntervalSet,
    Packet,
    PacketKind,
    Simulation,
    TransportReceiver,
    TransportSender,
    build_dumbbell,
    enqueue_droptail,
    run_scenario,
    serialize_delay,
)


def data(seq, size=1000, flow=0):
    return Packet(flow, seq, size, PacketKind.DATA, ts_sent=0.0)


def ack(cum, sack=(), ts_echo=None):
    return Packet(0, cum, 40, PacketKind.ACK, ts_sent=0.0, cum_ack=cum, sack=tuple(sack), ts_echo=ts_echo)


class TestEvents:
    def test_ties_run_in_schedule_order(self):
        q = EventQueue()
        for name in "abc":
            q.schedule(1.0, EventKind.APP_SEND, name)
        q.schedule(0.5, EventKind.APP_SEND, "first")
        assert [q.pop().target for _ in range(4)] == ["first", "a", "b", "c"]

    def test_past_events_rejected(self):
        q = EventQueue()
        q.schedule(2.0, EventKind.APP_SEND, None)
        q.pop()
        with pytest.raises(SimulationError):
            q.schedule(1.0, EventKind.APP_SEND, None)


class TestDropTail:
    def test_accepts_below_capacity(self):
        q = DropTailQueue(100, stamp=True)
        for i in range(99):
            enqueue_droptail(q, data(i + 1), 0.0)
        assert enqueue_droptail(q, data(100), 0.0) is EnqueueResult.ACCEPTED
        assert len(q) == 100

    def test_drops_when_full(self):
        q = DropTailQueue(100)
        for i in range(100):
            enqueue_droptail(q, data(i + 1), 0.0)
        assert enqueue_droptail(q, data(101), 0.0) is EnqueueResult.DROPPED
        assert q.dropped == 1 and len(q) == 100
        assert q.conserved()

    def test_empty_queue_stamps_enqueue_time(self):
        q = DropTailQueue(100, stamp=True)
        p = data(1)
        assert enqueue_droptail(q, p, 1.25) is EnqueueResult.ACCEPTED
        assert p.ts_enqueued == 1.25

    def test_fifo_order_and_bytes(self):
        q = DropTailQueue(3, stamp=True)
        for i, size in enumerate((100, 200, 300), 1):
            enqueue_droptail(q, data(i, size), float(i))
        assert q.occupancy_bytes == 600
        assert [q.dequeue(5.0).seq for _ in range(3)] == [1, 2, 3]
        assert q.occupancy_bytes == 0 and q.conserved()

    def test_packet_size_must_be_positive(self):
        with pytest.raises(ValueError):
            data(1, size=0)


class TestSerialize:
    def test_data_packet(self):
        assert serialize_delay(1000, 5e6) == pytest.approx(1.6e-3, rel=1e-12)

    def test_ack_packet(self):
        assert serialize_delay(40, 5e6) == pytest.approx(64e-6, rel=1e-12)

    def test_zero_bytes(self):
        assert serialize_delay(0, 5e6) == 0


class TestTopology:
    @pytest.mark.parametrize("n,nodes,links", [(2, 6, 5), (5, 12, 11)])
    def test_counts(self, n, nodes, links):
        net = build_dumbbell(ScenarioConfig(n_flows=n))
        assert len(net.nodes) == nodes
        assert len(net.links) == links

    def test_zero_flows(self):
        with pytest.raises(ConfigError) as exc:
            build_dumbbell(SimpleNamespace(n_flows=0, link_bandwidth=5e6, propagation_delay=15e-6, queue_capacity=100))
        assert exc.value.key == "n_flows"

    def test_zero_flows_in_config(self):
        with pytest.raises(ConfigError) as exc:
            ScenarioConfig(n_flows=0)
        assert exc.value.key == "n_flows"

    def test_bottleneck_is_r1_to_r2(self):
        net = build_dumbbell(ScenarioConfig(n_flows=3))
        assert net.bottleneck.name == "R1->R2"
        assert all(c.queue.capacity == 100 for c in net.channels())


class TestIntervalSet:
    def test_merge_and_query(self):
        s = IntervalSet()
        for a, b in [(5, 6), (9, 9), (7, 8), (20, 22)]:
            s.add(a, b)
        assert s.ranges() == [(5, 9), (20, 22)]
        assert 21 in s and 10 not in s
        assert s.next_missing(5) == 10
        s.discard_through(6)
        assert s.ranges() == [(7, 9), (20, 22)]


def sender(kind=PolicyKind.AIMD, cwnd=4, baseline=0, total=100):
    s = TransportSender(0, policy_init(kind), total)
    s.policy = PolicyState(kind, PolicyParams(), cwnd=cwnd, baseline=baseline, gains=cwnd - baseline if baseline else 0)
    return s


class TestSender:
    def test_cum_ack_advances_window(self):
        s = sender(cwnd=4)
        assert [p.seq for p in s.start(0.0)] == [1, 2, 3, 4]
        out = s.on_ack(ack(2), 0.01)
        # two per-ACK increments of about 1/4 each
        assert s.policy.cwnd == pytest.approx(4 + 1 / 4 + 1 / (4 + 1 / 4))
        assert [p.seq for p in out] == [5, 6]
        assert s.outstanding <= int(s.policy.cwnd)

    def test_third_dupack_enters_recovery(self):
        s = sender(PolicyKind.NEW_AIMD, cwnd=12, baseline=8)
        s.start(0.0)
        s.on_ack(ack(0), 0.01)
        s.on_ack(ack(0), 0.01)
        assert not s.in_recovery
        out = s.on_ack(ack(0), 0.01)
        assert s.in_recovery
        assert (s.policy.cwnd, s.policy.baseline) == (8, 4)
        assert out[0].seq == 1 and out[0].retransmission

    def test_no_second_decrease_in_recovery(self):
        s = sender(PolicyKind.NEW_AIMD, cwnd=12, baseline=8)
        s.start(0.0)
        for _ in range(3):
            s.on_ack(ack(0), 0.01)
        s.on_ack(ack(0), 0.02)
        s.on_ack(ack(0), 0.03)
        assert s.policy.loss_events == 1 and s.recovery_episodes == 1

    def test_sack_gap_enters_recovery(self):
        s = sender(cwnd=10)
        s.start(0.0)
        out = s.on_ack(ack(0, [(2, 2)]), 0.01)
        assert s.in_recovery and s.policy.cwnd == 5
        assert [p.seq for p in out if p.retransmission] == [1]

    def test_ack_for_unsent_data(self):
        s = sender(cwnd=2)
        s.start(0.0)
        with pytest.raises(ProtocolError):
            s.on_ack(ack(5), 0.01)

    def test_rto_halves_aimd(self):
        s = sender(cwnd=10)
        s.start(0.0)
        out = s.on_timer_expiry(1.0)
        assert s.policy.cwnd == 5
        assert [p.seq for p in out] == [1]

    def test_rto_backoff_doubles(self):
        s = sender(cwnd=10)
        s.start(0.0)
        r0 = s.rto
        s.on_timer_expiry(1.0)
        r1 = s.rto
        s.on_timer_expiry(3.0)
        assert (r1, s.rto) == (2 * r0, 4 * r0)

    def test_rto_backoff_capped(self):
        s = sender(cwnd=10)
        s.start(0.0)
        for i in range(10):
            s.on_timer_expiry(float(i))
        assert s.rto == 60.0

    def test_timer_without_outstanding_is_noop(self):
        s = sender(cwnd=4, total=0)
        assert s.on_timer_expiry(1.0) == []
        assert s.policy.cwnd == 4 and s.timeouts == 0

    def test_rtt_estimator_floor(self):
        s = sender(cwnd=1)
        s.start(0.0)
        s.on_ack(ack(1, ts_echo=0.0), 0.005)
        assert s.srtt == 0.005 and s.rttvar == 0.0025
        assert s.rto == 0.2


class TestReceiver:
    def test_out_of_order_and_sack(self):
        r = TransportReceiver(0, total_segments=5, keep_log=True)
        a = r.on_data(data(1), 0.0)
        assert a.cum_ack == 1 and a.sack == ()
        a = r.on_data(data(3), 0.1)
        assert a.cum_ack == 1 and a.sack == ((3, 3),)
        a = r.on_data(data(5), 0.2)
        assert a.sack == ((5, 5), (3, 3))
        r.on_data(data(2), 0.3)
        r.on_data(data(3), 0.35)
        a = r.on_data(data(4), 0.4)
        assert a.cum_ack == 5 and r.completion_time == 0.4
        assert r.app_log == [1, 2, 3, 4, 5] and r.duplicates == 1


class TestRunScenario:
    def test_first_delivery_time(self):
        trace, report = run_scenario(ScenarioConfig(n_flows=1, transfer_size=1000))
        expected = 3 * serialize_delay(1000, 5e6) + 3 * 3000 / 2e8
        assert trace.deliveries[0].ts_delivered == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(4.845e-3, abs=1e-12)
        assert report.delays.e2e_delays[0] == pytest.approx(4.845e-3, abs=1e-12)
        assert report.delays.queuing_delays == [0.0]

    def test_zero_byte_transfer(self):
        trace, report = run_scenario(ScenarioConfig(n_flows=1, transfer_size=0))
        assert trace.end_time == 0.0 and trace.completion_time == 0.0
        assert report.delays.queuing_delays == [] and report.delays.e2e_delays == []

    def test_repeat_runs_are_identical(self):
        cfg = ScenarioConfig(n_flows=2, sim_duration=3.0, start_jitter=0.01, seed=7)
        a, _ = run_scenario(cfg)
        b, _ = run_scenario(cfg)
        assert a.fingerprint() == b.fingerprint()

    def test_seed_changes_jittered_starts(self):
        a = Simulation(ScenarioConfig(start_jitter=0.05, seed=1)).start_times
        b = Simulation(ScenarioConfig(start_jitter=0.05, seed=2)).start_times
        assert a != b

    def test_max_sim_time_guard(self):
        with pytest.raises(SimulationError, match="max_sim_time"):
            run_scenario(ScenarioConfig(n_flows=1, transfer_size=10_000_000, max_sim_time=1.0))

    def test_event_trace_csv(self):
        trace, _ = run_scenario(ScenarioConfig(n_flows=1, transfer_size=3000, record_events=True))
        lines = trace.events_csv().splitlines()
        assert lines[0] == "time,node,event_kind,flow,seq,queue_occupancy"
        assert lines[1].split(",")[2] == "app_send"
        assert trace.queue_samples_csv().splitlines()[0] == "time_s,queue_packets,queue_bytes"


def test_window_observer_catches_overshoot(monkeypatch):
    import aimdlab.packet_sim.transport as transport

    monkeypatch.setattr(transport, "window_limit", lambda cwnd: int(cwnd) + 3)
    trace, _ = run_scenario(ScenarioConfig(n_flows=1, transfer_size=50_000))
    assert trace.flows[0].outstanding_violations > 0
