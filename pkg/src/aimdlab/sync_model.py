"""Synchronous binary-feedback model of m flows sharing one threshold.

Every round trip each flow adds the additive step to its window.  When the
aggregate reaches the capacity ``W`` the network answers 0 and every flow
applies its decrease in that same round.  The interval between two such
signals is a cycle.

:func:`run_sync` executes the model step by step.  The remaining functions are
the closed-form cycle algebra for two flows, kept independent of the step loop
so each can check the other.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

from aimdlab.congestion_policy import (
    AckMode,
    PolicyKind,
    PolicyParams,
    on_loss_event,
    on_round_ack,
    policy_init,
)
from aimdlab.errors import ConfigError, DomainError, SimulationError
from aimdlab.metrics import jain_index

FAIRNESS_TOLERANCE = 1e-6


class Arithmetic(enum.Enum):
    """``INTEGER`` counts whole round trips and may overshoot ``W``.
    ``RATIONAL`` lets the final step of a cycle be fractional so the aggregate
    lands on ``W`` exactly."""

    INTEGER = "integer"
    RATIONAL = "rational"


@dataclass(frozen=True)
class SyncConfig:
    capacity: Fraction
    initial_windows: tuple
    kind: PolicyKind = PolicyKind.NEW_AIMD
    arithmetic: Arithmetic = Arithmetic.INTEGER
    max_cycles: int = 10
    additive_step: Fraction = Fraction(1)
    max_steps_per_cycle: int = 1_000_000
    # apply a cycle's whole rounds as one scaled increase; exact because the
    # per-round increase is linear, and much faster for large W
    batch_steps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "capacity", Fraction(self.capacity))
        object.__setattr__(self, "initial_windows", tuple(Fraction(x) for x in self.initial_windows))
        object.__setattr__(self, "additive_step", Fraction(self.additive_step))
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        if not isinstance(self.arithmetic, Arithmetic):
            object.__setattr__(self, "arithmetic", Arithmetic(str(self.arithmetic).lower()))
        if not self.initial_windows:
            raise ConfigError("x", "at least one flow is required")
        if any(x < 1 for x in self.initial_windows):
            raise ConfigError("x", "every initial window must be >= 1 segment")
        if not self.capacity > sum(self.initial_windows):
            raise ConfigError("W", "capacity W must exceed the sum of initial windows")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles", "max_cycles must be >= 1")
        if self.additive_step <= 0:
            raise ConfigError("additive_step", "additive_step must be > 0")

    @property
    def n_flows(self) -> int:
        return len(self.initial_windows)


@dataclass(frozen=True)
class CycleRecord:
    cycle: int
    steps: Fraction
    windows_at_start: tuple
    windows_at_congestion: tuple
    aggregate_at_congestion: Fraction
    packets: Fraction

    @property
    def rtts(self) -> Fraction:
        return self.steps + 1

    @property
    def aggregate_at_start(self) -> Fraction:
        return sum(self.windows_at_start)

    @property
    def mean_aggregate(self) -> Fraction:
        return self.packets / self.rtts


@dataclass
class EpochAnalytics:
    closed_form_k: list
    closed_form_totals: list
    jain_index_per_cycle: list
    discrepancy_flags: list = field(default_factory=list)

    @property
    def all_match(self) -> bool:
        return not any(self.discrepancy_flags)


def _params_for(x: Fraction, config: SyncConfig) -> PolicyParams:
    return PolicyParams(
        additive_step=config.additive_step,
        decrease_factor=Fraction(1, 2),
        initial_window=x,
        min_window=1,
    )


def run_sync(config: SyncConfig) -> list[CycleRecord]:
    W = config.capacity
    m = config.n_flows
    alpha = config.additive_step
    states = [policy_init(config.kind, _params_for(x, config)) for x in config.initial_windows]
    records = []

    for c in range(1, config.max_cycles + 1):
        start = tuple(s.cwnd for s in states)
        z = sum(start)
        steps = Fraction(0)
        packets = Fraction(0)

        if config.batch_steps:
            if config.arithmetic is Arithmetic.INTEGER:
                n = max(0, math.ceil((W - z) / (m * alpha)))
            else:
                n = max(0, math.floor((W - z) / (m * alpha)))
            if n > config.max_steps_per_cycle:
                raise SimulationError(f"cycle {c} exceeded {config.max_steps_per_cycle} steps")
            if n:
                # rounds 0..n-1 carry z, z + m*alpha, ...
                packets += n * z + m * alpha * n * (n - 1) / 2
                states = [on_round_ack(s, AckMode.PER_ROUND, scale=n) for s in states]
                steps += n
                z = sum(s.cwnd for s in states)
            if config.arithmetic is Arithmetic.INTEGER:
                packets += z
            else:
                if z < W:
                    frac = (W - z) / (m * alpha)
                    states = [on_round_ack(s, AckMode.PER_ROUND, scale=frac) for s in states]
                    steps += frac
                    z = sum(s.cwnd for s in states)
                packets = (steps + 1) * (sum(start) + z) / 2
        elif config.arithmetic is Arithmetic.INTEGER:
            while z < W:
                packets += z
                states = [on_round_ack(s, AckMode.PER_ROUND) for s in states]
                steps += 1
                z = sum(s.cwnd for s in states)
                if steps > config.max_steps_per_cycle:
                    raise SimulationError(f"cycle {c} exceeded {config.max_steps_per_cycle} steps")
            # the round that draws feedback 0 is part of the cycle
            packets += z
        else:
            while z + m * alpha <= W:
                states = [on_round_ack(s, AckMode.PER_ROUND) for s in states]
                steps += 1
                z = sum(s.cwnd for s in states)
                if steps > config.max_steps_per_cycle:
                    raise SimulationError(f"cycle {c} exceeded {config.max_steps_per_cycle} steps")
            if z < W:
                frac = (W - z) / (m * alpha)
                states = [on_round_ack(s, AckMode.PER_ROUND, scale=frac) for s in states]
                steps += frac
                z = sum(s.cwnd for s in states)
            # windows grow linearly inside a cycle: rounds times mean aggregate
            packets = (steps + 1) * (sum(start) + z) / 2

        records.append(
            CycleRecord(
                cycle=c,
                steps=steps,
                windows_at_start=start,
                windows_at_congestion=tuple(s.cwnd for s in states),
                aggregate_at_congestion=z,
                packets=packets,
            )
        )
        states = [on_loss_event(s) for s in states]

    return records


def closed_form_ks(W, k1, n_cycles: int) -> list[Fraction]:
    """Per-cycle step counts of two-flow New-AIMD from the first cycle's ``k1``.

    >>> closed_form_ks(24, 8, 4)
    [Fraction(8, 1), Fraction(2, 1), Fraction(1, 1), Fraction(1, 2)]
    """
    W = Fraction(W)
    k1 = Fraction(k1)
    if k1 < 0:
        raise DomainError("k1 must be >= 0")
    if W <= 2 * k1:
        raise DomainError(f"W={W} <= 2*k1={2 * k1}: second cycle would have no steps")
    if n_cycles < 1:
        return []
    ks = [k1]
    if n_cycles >= 2:
        ks.append((W - 2 * k1) / 4)
    while len(ks) < n_cycles:
        ks.append(ks[-1] / 2)
    return ks


def cycle_packet_total(W, k) -> Fraction:
    """Packets sent in a cycle of ``k`` steps that ends exactly at ``W``."""
    W = Fraction(W)
    k = Fraction(k)
    if k < 0:
        raise DomainError("k must be >= 0")
    if k >= W:
        raise DomainError(f"k={k} must be < W={W}")
    return (1 + k) * (W - k)


def aggregate_window(kind: PolicyKind, x: Sequence, k_history: Sequence, step=0) -> Fraction:
    """Aggregate window ``step`` rounds into cycle ``len(k_history) + 1``.

    New-AIMD keeps every gain, so the aggregate is the halved-per-cycle sum of
    initial windows plus all the additive steps so far.  AIMD halves the full
    aggregate it had at the previous congestion point.
    """
    m = len(x)
    total = sum(Fraction(v) for v in x)
    c = len(k_history) + 1
    step = Fraction(step)
    if kind is PolicyKind.NEW_AIMD:
        return total / 2 ** (c - 1) + m * sum(Fraction(k) for k in k_history) + m * step
    if kind is PolicyKind.AIMD:
        start = total
        for k in k_history:
            start = (start + m * Fraction(k)) / 2
        return start + m * step
    raise ValueError(f"unhandled policy kind {kind!r}")


def analyze(config: SyncConfig, records: Sequence[CycleRecord]) -> EpochAnalytics:
    """Compare step-loop records with the closed forms for the same config.

    A cycle is flagged when its step count or packet total disagrees with the
    algebra.  The algebra assumes the aggregate hits ``W`` exactly, so integer
    runs that overshoot will be flagged; rational runs should never be.
    """
    W = config.capacity
    m = config.n_flows
    alpha = config.additive_step
    n = len(records)
    jain = [jain_index(r.windows_at_start) for r in records]
    if not records:
        return EpochAnalytics([], [], [], [])

    ks: list
    if config.kind is PolicyKind.NEW_AIMD and m == 2 and alpha == 1 and W > 2 * records[0].steps:
        ks = closed_form_ks(W, records[0].steps, n)
    else:
        ks = []
        history: list = []
        for r in records:
            start = aggregate_window(config.kind, config.initial_windows, history, 0)
            k = (W - start) / (m * alpha)
            if config.arithmetic is Arithmetic.INTEGER:
                k = Fraction(math.ceil(k))
            ks.append(k)
            history.append(r.steps)

    totals = []
    for k in ks:
        try:
            totals.append(cycle_packet_total(W, k) if m * alpha == 2 else None)
        except DomainError:
            totals.append(None)

    flags = []
    for r, k, total in zip(records, ks, totals):
        bad = r.steps != k
        if total is not None:
            bad = bad or r.packets != total
        flags.append(bad)
    return EpochAnalytics(ks, totals, jain, flags)


@dataclass(frozen=True)
class PolicyComparison:
    kind: PolicyKind
    cycles_to_fairness: int | None
    steady_mean_aggregate: Fraction
    packets_per_cycle: tuple
    cycle_gaps: tuple


def compare_policies(config: SyncConfig, steady_cycles: tuple[int, int] = (2, 2)) -> list[PolicyComparison]:
    """Run both policies on the same start and summarize each.

    ``steady_cycles`` is an inclusive 1-based cycle range; its mean aggregate
    window per RTT is total packets over total RTTs in that range.  The default
    is the first cycle after the initial congestion point.
    """
    lo, hi = steady_cycles
    if lo < 1 or hi < lo:
        raise ConfigError("steady_cycles", f"invalid steady cycle range {steady_cycles}")

    rows = []
    for kind in (PolicyKind.AIMD, PolicyKind.NEW_AIMD):
        cfg = replace(config, kind=kind, max_cycles=max(config.max_cycles, hi))
        records = run_sync(cfg)
        fair = next(
            (r.cycle for r in records if jain_index(r.windows_at_start) >= 1 - FAIRNESS_TOLERANCE),
            None,
        )
        window = records[lo - 1 : hi]
        mean = sum(r.packets for r in window) / sum(r.rtts for r in window)
        gaps = tuple(max(r.windows_at_start) - min(r.windows_at_start) for r in records)
        rows.append(PolicyComparison(kind, fair, mean, tuple(r.packets for r in records), gaps))
    return rows


CYCLE_CSV_COLUMNS = ("cycle", "k_c", "rtts", "aggregate_at_congestion", "packets", "jain_index", "closed_form_match")


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else repr(float(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cycles_to_csv(records: Iterable[CycleRecord], analytics: EpochAnalytics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CYCLE_CSV_COLUMNS)
    for r, jain, flag in zip(records, analytics.jain_index_per_cycle, analytics.discrepancy_flags):
        w.writerow(
            [
                r.cycle,
                _fmt(r.steps),
                _fmt(r.rtts),
                _fmt(r.aggregate_at_congestion),
                _fmt(r.packets),
                repr(float(jain)),
                "true" if not flag else "false",
            ]
        )
    return buf.getvalue()
