"""Transfer-time, queue/delay and utilization sweeps over the dumbbell, plus
the synchronous-model validation suite.

Every sweep runs one isolated simulation per (policy, n_flows) pair and
keeps the rows sorted by policy, then n_flows, so reports are byte-stable.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from aimdlab import __version__
from aimdlab.config import ScenarioConfig, dump_config, format_value, parse_lines
from aimdlab.congestion_policy import PolicyKind
from aimdlab.errors import AimdLabError, ConfigError
from aimdlab.packet_sim.simulator import run_scenario
from aimdlab.sync_model import Arithmetic, SyncConfig, closed_form_ks, cycle_packet_total, run_sync

EXP1_TRANSFER_BYTES = 20_480_000
UTILIZATION_WARMUP = 5.0

TRANSFER_COLUMNS = ("policy", "n_flows", "seconds", "throughput_Bps")
QUEUE_COLUMNS = ("time_s", "n_flows", "queue_packets", "queue_bytes")
DELAY_COLUMNS = ("rtt_bucket", "n_flows", "avg_queuing_delay_ms")
UTIL_COLUMNS = ("time_s", "n_flows", "rho")
UTIL_SUMMARY_COLUMNS = ("n_flows", "avg_rho_after_5s")

MANIFEST_KEYS = ("experiment", "flows", "policies", "version")


class ReportError(AimdLabError, OSError):
    """Writing a report failed; the message carries the path."""


@dataclass(frozen=True)
class ComparisonRow:
    policy: PolicyKind
    n_flows: int
    completion_time: float | None
    throughput: float | None  # bytes/s over the whole transfer
    avg_utilization: float | None
    mean_queuing_delay: float | None  # seconds
    jain_index: float | None
    drops: int


@dataclass
class ExperimentResult:
    experiment: str
    base: ScenarioConfig
    flows: tuple
    policies: tuple
    rows: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)  # (PolicyKind, n_flows) -> SummaryReport

    def row(self, policy, n_flows: int) -> ComparisonRow:
        policy = PolicyKind.parse(policy)
        for r in self.rows:
            if r.policy is policy and r.n_flows == n_flows:
                return r
        raise KeyError((policy, n_flows))


def _policy_order(kind: PolicyKind) -> int:
    return list(PolicyKind).index(kind)


def _check_flows(flows: Iterable[int]) -> tuple:
    flows = tuple(sorted(set(int(n) for n in flows)))
    if not flows:
        raise ConfigError("flows", "at least one flow count is required")
    if flows[0] < 1:
        raise ConfigError("flows", "flow counts must be >= 1")
    return flows


def _check_policies(policies: Iterable) -> tuple:
    kinds = tuple(sorted({PolicyKind.parse(p) for p in policies}, key=_policy_order))
    if not kinds:
        raise ConfigError("policies", "at least one policy is required")
    return kinds


def _sweep(experiment: str, base: ScenarioConfig, flows: tuple, policies: tuple) -> ExperimentResult:
    result = ExperimentResult(experiment, base, flows, policies)
    for kind in policies:
        for n in flows:
            trace, report = run_scenario(base.replace(policy=kind, n_flows=n))
            d = report.delays.mean_queuing
            total_bytes = sum(t.file_size for t in report.transfers)
            completion = report.completion_time
            tput = None
            if completion is not None:
                span = completion - min(f.start_time for f in trace.flows)
                tput = total_bytes / span if span > 0 else None
            result.reports[(kind, n)] = report
            result.rows.append(
                ComparisonRow(
                    policy=kind,
                    n_flows=n,
                    completion_time=completion,
                    throughput=tput,
                    avg_utilization=report.avg_utilization_after_warmup,
                    mean_queuing_delay=d,
                    jain_index=report.jain_index,
                    drops=sum(report.drops.values()),
                )
            )
    return result


def exp_transfer_time(flows: Sequence[int], policies: Sequence, base: ScenarioConfig | None = None) -> ExperimentResult:
    """Time to move a fixed total transfer across the bottleneck.

    ``base`` defaults to the standard scenario carrying 20 480 000 bytes split
    equally across the flows.
    """
    if base is None:
        base = ScenarioConfig(transfer_size=EXP1_TRANSFER_BYTES)
    if base.transfer_size is None:
        raise ConfigError("transfer_size", "the transfer-time experiment needs transfer_size")
    return _sweep("exp1", base, _check_flows(flows), _check_policies(policies))


def exp_queue_delay(flows: Sequence[int], policy=PolicyKind.NEW_AIMD, base: ScenarioConfig | None = None) -> ExperimentResult:
    """Bottleneck queue length and per-RTT queuing delay under greedy flows."""
    if base is None:
        base = ScenarioConfig()
    if base.transfer_size is not None:
        raise ConfigError("transfer_size", "the queue/delay experiment runs greedy flows; unset transfer_size")
    return _sweep("exp2", base, _check_flows(flows), _check_policies([policy]))


def exp_utilization(flows: Sequence[int], policy=PolicyKind.NEW_AIMD, base: ScenarioConfig | None = None) -> ExperimentResult:
    """Per-second bottleneck utilization and its post-warmup average."""
    if base is None:
        base = ScenarioConfig()
    if base.transfer_size is not None:
        raise ConfigError("transfer_size", "the utilization experiment runs greedy flows; unset transfer_size")
    if not base.sim_duration > base.warmup:
        raise ConfigError("sim_duration", f"sim_duration must exceed the {base.warmup} s warmup")
    return _sweep("exp3", base, _check_flows(flows), _check_policies([policy]))


EXPERIMENTS = {
    "exp1": exp_transfer_time,
    "exp2": exp_queue_delay,
    "exp3": exp_utilization,
}


# -- synchronous-model validation --------------------------------------------


@dataclass(frozen=True)
class SyncCase:
    capacity: Fraction
    initial_windows: tuple


@dataclass
class ValidationReport:
    cases: int
    passed: int
    first_counterexample: str | None = None
    known_case: str = ""

    @property
    def ok(self) -> bool:
        return self.passed == self.cases and self.first_counterexample is None

    def lines(self) -> list[str]:
        out = [f"cases = {self.cases}", f"passed = {self.passed}", f"known_case = {self.known_case}"]
        if self.first_counterexample:
            out.append(f"first_counterexample = {self.first_counterexample}")
        out.append(f"result = {'pass' if self.ok else 'fail'}")
        return out


def random_sync_case(rng: random.Random, max_capacity: int = 10_000) -> SyncCase:
    """Two-flow case with x1 + x2 < W <= max_capacity and W - x1 - x2 even."""
    while True:
        W = rng.randint(4, max_capacity)
        x1 = rng.randint(1, W - 3)
        x2 = rng.randint(1, W - x1 - 1)
        if (W - x1 - x2) % 2 == 0:
            return SyncCase(Fraction(W), (Fraction(x1), Fraction(x2)))


def check_sync_case(case: SyncCase, cycles: int = 8) -> str | None:
    """Step-loop New-AIMD vs the closed forms; returns a description of the first mismatch."""
    config = SyncConfig(case.capacity, case.initial_windows, PolicyKind.NEW_AIMD, Arithmetic.RATIONAL, max_cycles=cycles,
                        batch_steps=True)
    records = run_sync(config)
    W = case.capacity
    ks = [r.steps for r in records]
    expected = closed_form_ks(W, ks[0], cycles)
    label = f"W={W}, x={[str(x) for x in case.initial_windows]}"
    for c, (got, want) in enumerate(zip(ks, expected), 1):
        if got != want:
            return f"{label}: cycle {c} has k={got}, closed form gives {want}"
    for r in records:
        want = cycle_packet_total(W, r.steps)
        if r.packets != want:
            return f"{label}: cycle {r.cycle} carried {r.packets} packets, closed form gives {want}"
    return None


def known_sync_case() -> tuple[list, list]:
    records = run_sync(SyncConfig(24, (2, 6), PolicyKind.NEW_AIMD, Arithmetic.RATIONAL, max_cycles=3))
    return [r.steps for r in records], [r.packets for r in records]


def sync_validation_suite(count: int = 1000, seed: int = 0) -> ValidationReport:
    if count < 1:
        raise ConfigError("cases", "count must be >= 1")
    rng = random.Random(seed)
    report = ValidationReport(cases=count, passed=0)
    for _ in range(count):
        failure = check_sync_case(random_sync_case(rng))
        if failure is None:
            report.passed += 1
        elif report.first_counterexample is None:
            report.first_counterexample = failure
    ks, totals = known_sync_case()
    report.known_case = "W=24 x=[2,6] k=[{}] totals=[{}]".format(
        ",".join(str(k) for k in ks), ",".join(str(t) for t in totals)
    )
    if ks != [8, 2, 1] or totals[:2] != [144, 66]:
        report.first_counterexample = report.first_counterexample or f"known case mismatch: {report.known_case}"
    return report


# -- report files ------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _ordered(result: ExperimentResult) -> list:
    return sorted(result.reports.items(), key=lambda kv: (_policy_order(kv[0][0]), kv[0][1]))


def report_files(result: ExperimentResult) -> dict[str, str]:
    """File name -> contents for everything :func:`emit_report` writes."""
    files = {}
    ordered = _ordered(result)
    if result.experiment == "exp1":
        rows = sorted(result.rows, key=lambda r: (_policy_order(r.policy), r.n_flows))
        files["transfer_times.csv"] = _csv(
            TRANSFER_COLUMNS, [(r.policy.value, r.n_flows, r.completion_time, r.throughput) for r in rows]
        )
    elif result.experiment == "exp2":
        files["queue_series.csv"] = _csv(
            QUEUE_COLUMNS, [(t, n, pk, by) for (_, n), rep in ordered for t, pk, by in rep.queue_series]
        )
        files["delay_per_rtt.csv"] = _csv(
            DELAY_COLUMNS,
            [(b, n, d * 1e3) for (_, n), rep in ordered for b, d in rep.delays.per_rtt_bucket.items()],
        )
    elif result.experiment == "exp3":
        files["utilization_per_second.csv"] = _csv(
            UTIL_COLUMNS, [(s.interval_start, n, s.utilization) for (_, n), rep in ordered for s in rep.utilization_series]
        )
        files["utilization_summary.csv"] = _csv(
            UTIL_SUMMARY_COLUMNS, [(n, rep.avg_utilization_after_warmup) for (_, n), rep in ordered]
        )
    else:
        raise ConfigError("experiment", f"unknown experiment {result.experiment!r}")
    files["manifest.txt"] = manifest_text(result)
    files["summary.txt"] = summary_text(result)
    return files


def manifest_text(result: ExperimentResult) -> str:
    extra = {
        "experiment": result.experiment,
        "flows": ",".join(str(n) for n in result.flows),
        "policies": ",".join(p.value for p in result.policies),
        "version": __version__,
    }
    return dump_config(result.base) + "".join(f"{k} = {extra[k]}\n" for k in MANIFEST_KEYS)


def summary_text(result: ExperimentResult) -> str:
    lines = []
    for (kind, n), rep in _ordered(result):
        for key, value in rep.flat().items():
            lines.append(f"{kind.value}.n{n}.{key} = {'none' if value is None else format_value(value)}")
    return "\n".join(lines) + "\n"


def emit_report(result: ExperimentResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    written = []
    for name, text in report_files(result).items():
        path = out / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(path)
    return written


def load_manifest(path) -> tuple[str, ScenarioConfig, tuple, tuple]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("manifest", f"cannot read manifest {p}: {exc.strerror or exc}") from exc
    values, extra = parse_lines(text.splitlines(), str(p), allowed_extra=MANIFEST_KEYS)
    missing = [k for k in ("experiment", "flows", "policies") if k not in extra]
    if missing:
        raise ConfigError(missing[0], f"{p}: manifest lacks {missing[0]}")
    experiment = extra["experiment"]
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"{p}: unknown experiment {experiment!r}")
    flows = tuple(int(s) for s in extra["flows"].split(",") if s.strip())
    policies = tuple(PolicyKind.parse(s) for s in extra["policies"].split(",") if s.strip())
    return experiment, ScenarioConfig(**values), flows, policies


def run_experiment(experiment: str, flows: Sequence[int], policies: Sequence, base: ScenarioConfig) -> ExperimentResult:
    if experiment == "exp1":
        return exp_transfer_time(flows, policies, base)
    policies = _check_policies(policies)
    if len(policies) != 1:
        raise ConfigError("policies", f"{experiment} takes exactly one policy")
    return EXPERIMENTS[experiment](flows, policies[0], base)


def rerun_manifest(path) -> ExperimentResult:
    """Repeat the run a manifest describes."""
    experiment, base, flows, policies = load_manifest(path)
    return run_experiment(experiment, flows, policies, base)
