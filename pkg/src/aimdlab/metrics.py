"""Throughput, utilization, fairness and delay measurements over simulation traces."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from aimdlab.errors import DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransferSummary:
    flow_id: int
    file_size: float  # bytes
    duration: float  # seconds
    throughput: float  # bytes/second


@dataclass(frozen=True)
class UtilSample:
    interval_start: float
    bits_transmitted: float
    utilization: float
    clipped: bool = False


@dataclass
class DelayStats:
    queuing_delays: list = field(default_factory=list)  # seconds
    e2e_delays: list = field(default_factory=list)  # seconds
    per_rtt_bucket: dict = field(default_factory=dict)  # bucket index -> mean queuing delay (s)

    @staticmethod
    def _mean(values):
        return sum(values) / len(values) if values else None

    @property
    def mean_queuing(self):
        return self._mean(self.queuing_delays)

    @property
    def max_queuing(self):
        return max(self.queuing_delays) if self.queuing_delays else None

    @property
    def mean_e2e(self):
        return self._mean(self.e2e_delays)

    @property
    def max_e2e(self):
        return max(self.e2e_delays) if self.e2e_delays else None


def throughput(f: float, delta: float) -> float:
    """Transfer throughput ``f / delta`` in bytes per second."""
    if not delta > 0:
        raise DomainError(f"transfer duration must be > 0, got {delta}")
    return f / delta


def utilization(r: float, B: float) -> float:
    """Fraction of link bandwidth ``B`` used by rate ``r`` (both bits/s).

    Rates above ``B`` mean the caller double counted something; the value is
    clipped to 1 and a warning is logged.
    """
    if not B > 0:
        raise DomainError(f"link bandwidth must be > 0, got {B}")
    if r < 0:
        raise DomainError(f"rate must be >= 0, got {r}")
    rho = r / B
    if rho > 1:
        log.warning("rate %r exceeds bandwidth %r; clipping utilization to 1", r, B)
        return 1.0
    return rho


def per_second_utilization(byte_bins: Sequence[float], B: float) -> list[UtilSample]:
    """One utilization sample per 1 s bin of bytes sent on a link."""
    out = []
    for i, nbytes in enumerate(byte_bins):
        bits = nbytes * 8
        # float splitting of a transmission across bins can overshoot by an ulp
        clipped = bits > B * (1 + 1e-9)
        out.append(UtilSample(float(i), bits, utilization(min(bits, B), B), clipped))
    return out


def warmup_average(samples: Sequence[UtilSample], warmup: float = 5.0) -> float:
    kept = [s.utilization for s in samples if s.interval_start >= warmup]
    if not kept:
        raise DomainError(f"utilization series of {len(samples)} s is not longer than the {warmup} s warmup")
    return sum(kept) / len(kept)


def jain_index(values: Sequence) -> float:
    """Jain's fairness index ``(sum v)^2 / (m * sum v^2)``.

    Exact for :class:`~fractions.Fraction` input.
    """
    if not values:
        raise DomainError("jain_index needs at least one value")
    if any(v < 0 for v in values):
        raise DomainError("jain_index values must be non-negative")
    sq = sum(v * v for v in values)
    if sq == 0:
        raise DomainError("jain_index is undefined when every value is zero")
    s = sum(values)
    return s * s / (len(values) * sq)


def delay_stats(trace, bucket_width: float | None = None) -> DelayStats:
    """Queuing delay at the bottleneck and end-to-end delay of delivered DATA.

    ``bucket_width`` defaults to the trace's unloaded round-trip time; each
    bottleneck packet falls in bucket ``floor(enqueue_time / bucket_width)``.
    """
    if bucket_width is None:
        bucket_width = trace.base_rtt
    if not bucket_width > 0:
        raise DomainError("bucket width must be > 0")

    queuing = []
    buckets = defaultdict(list)
    for enq, deq in trace.bottleneck_delays:
        d = deq - enq
        queuing.append(d)
        buckets[int(math.floor(enq / bucket_width))].append(d)

    e2e = [rec.ts_delivered - rec.ts_sent for rec in trace.deliveries]
    per_bucket = {b: sum(v) / len(v) for b, v in sorted(buckets.items())}
    return DelayStats(queuing, e2e, per_bucket)


def queue_series(samples: Sequence, interval: float, end_time: float) -> list[tuple[float, int, int]]:
    """Resample a change log of queue occupancy onto a fixed grid.

    ``samples`` are ``(time, packets, bytes, ...)`` tuples in time order; the
    occupancy holds between changes.  Returns ``(time, packets, bytes)``.
    """
    if not interval > 0:
        raise DomainError("sample interval must be > 0")
    out = []
    i = 0
    pk, by = 0, 0
    n = int(math.floor(end_time / interval + 1e-9))
    for j in range(n + 1):
        t = j * interval
        while i < len(samples) and samples[i][0] <= t:
            pk, by = samples[i][1], samples[i][2]
            i += 1
        out.append((round(t, 9), pk, by))
    return out


@dataclass
class SummaryReport:
    transfers: list
    utilization_series: list
    avg_utilization_after_warmup: float | None
    queue_series: list
    delays: DelayStats
    jain_index: float | None
    drops: dict
    completion_time: float | None

    def flat(self) -> dict:
        """Scalar fields for the key = value summary file."""
        d = self.delays
        out = {
            "completion_time_s": self.completion_time,
            "total_bytes": sum(t.file_size for t in self.transfers),
            "avg_rho_after_warmup": self.avg_utilization_after_warmup,
            "jain_index": self.jain_index,
            "mean_queuing_delay_ms": None if d.mean_queuing is None else d.mean_queuing * 1e3,
            "max_queuing_delay_ms": None if d.max_queuing is None else d.max_queuing * 1e3,
            "mean_e2e_delay_ms": None if d.mean_e2e is None else d.mean_e2e * 1e3,
            "max_queue_packets": max((q[1] for q in self.queue_series), default=0),
        }
        for name, count in sorted(self.drops.items()):
            out[f"drops.{name}"] = count
        for t in self.transfers:
            out[f"flow{t.flow_id}.seconds"] = t.duration
            out[f"flow{t.flow_id}.throughput_Bps"] = t.throughput
        return out


def summarize(trace, warmup: float = 5.0, sample_interval: float = 0.1) -> SummaryReport:
    transfers = []
    for fs in trace.flows:
        end = fs.completion_time if fs.completion_time is not None else trace.end_time
        duration = end - fs.start_time
        if duration > 0:
            transfers.append(TransferSummary(fs.flow_id, fs.bytes_delivered, duration, throughput(fs.bytes_delivered, duration)))
        else:
            transfers.append(TransferSummary(fs.flow_id, fs.bytes_delivered, 0.0, 0.0))

    series = per_second_utilization(trace.bottleneck_byte_bins, trace.bottleneck_bandwidth)
    try:
        avg = warmup_average(series, warmup)
    except DomainError:
        avg = None

    rates = [t.throughput for t in transfers]
    jain = jain_index(rates) if any(r > 0 for r in rates) else None
    completion = trace.completion_time
    return SummaryReport(
        transfers=transfers,
        utilization_series=series,
        avg_utilization_after_warmup=avg,
        queue_series=queue_series(trace.queue_samples, sample_interval, trace.end_time),
        delays=delay_stats(trace),
        jain_index=jain,
        drops=dict(trace.drops),
        completion_time=completion,
    )
