"""Scenario configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping

from aimdlab.congestion_policy import PolicyKind
from aimdlab.errors import ConfigError

# Scenario descriptions shown in ``--help``.
FIELD_HELP = {
    "n_flows": "number of sender/receiver pairs sharing the bottleneck",
    "policy": "window rule: aimd or new-aimd",
    "link_bandwidth": "rate of every link, bits/s",
    "queue_capacity": "DropTail buffer of every outgoing port, packets",
    "link_distance": "length of every link, meters",
    "propagation_speed": "signal speed on the links, m/s",
    "mss": "DATA packet size, bytes",
    "ack_size": "ACK packet size, bytes",
    "transfer_size": "bytes to transfer (none = greedy flows for sim_duration)",
    "per_flow_transfer": "true: every flow sends transfer_size; false: the total is split",
    "sim_duration": "length of greedy runs, seconds",
    "max_sim_time": "abort a transfer run that has not finished by this time, seconds",
    "seed": "RNG seed (only used by start_jitter)",
    "sample_interval": "queue sampling period, seconds",
    "initial_window": "starting congestion window, segments",
    "additive_step": "additive increase per RTT, segments",
    "min_rto": "retransmission timeout floor, seconds",
    "initial_rto": "retransmission timeout before the first RTT sample, seconds",
    "start_time": "time at which flows start sending, seconds",
    "start_jitter": "uniform random extra start delay per flow, seconds",
    "warmup": "utilization warmup excluded from averages, seconds",
    "record_events": "keep a per-event trace",
}


@dataclass(frozen=True)
class ScenarioConfig:
    n_flows: int = 2
    policy: PolicyKind = PolicyKind.NEW_AIMD
    link_bandwidth: float = 5e6
    queue_capacity: int = 100
    link_distance: float = 3000.0
    propagation_speed: float = 2e8
    mss: int = 1000
    ack_size: int = 40
    transfer_size: int | None = None
    per_flow_transfer: bool = False
    sim_duration: float = 30.0
    max_sim_time: float = 600.0
    seed: int = 0
    sample_interval: float = 0.1
    initial_window: float = 1.0
    additive_step: float = 1.0
    min_rto: float = 0.2
    initial_rto: float = 1.0
    start_time: float = 0.0
    start_jitter: float = 0.0
    warmup: float = 5.0
    record_events: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        # keep the file echo stable: 8 and 8.0 must format the same way
        for f in fields(self):
            if f.type == "float":
                object.__setattr__(self, f.name, float(getattr(self, f.name)))
        if self.n_flows < 1:
            raise ConfigError("n_flows", "n_flows must be >= 1")
        for key in ("link_bandwidth", "queue_capacity", "propagation_speed", "mss", "ack_size",
                    "sim_duration", "max_sim_time", "sample_interval", "additive_step",
                    "min_rto", "initial_rto"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, f"{key} must be > 0")
        for key in ("link_distance", "start_time", "start_jitter", "warmup"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"{key} must be >= 0")
        if self.initial_window < 1:
            raise ConfigError("initial_window", "initial_window < min_window")
        if self.transfer_size is not None and self.transfer_size < 0:
            raise ConfigError("transfer_size", "transfer_size must be >= 0")

    @property
    def propagation_delay(self) -> float:
        return self.link_distance / self.propagation_speed

    @property
    def greedy(self) -> bool:
        return self.transfer_size is None

    def flow_bytes(self) -> list[int]:
        """Bytes each flow sends; remainders of an equal split go to the first flows."""
        if self.transfer_size is None:
            raise ConfigError("transfer_size", "greedy scenario has no transfer size")
        if self.per_flow_transfer:
            return [self.transfer_size] * self.n_flows
        q, r = divmod(self.transfer_size, self.n_flows)
        return [q + (1 if i < r else 0) for i in range(self.n_flows)]

    @property
    def base_rtt(self) -> float:
        """Round-trip time of one DATA/ACK exchange through empty queues."""
        hops = 3
        prop = self.propagation_delay
        return hops * (self.mss * 8 / self.link_bandwidth + prop) + hops * (
            self.ack_size * 8 / self.link_bandwidth + prop
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))
_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, PolicyKind):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"{key}: expected a boolean, got {text!r}")


def parse_value(key: str, text: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(key, f"unknown key: {key}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if key == "policy":
            return PolicyKind.parse(text)
        if kind == "bool":
            return _parse_bool(key, text)
        if kind == "int | None":
            return None if text.lower() in ("none", "") else int(float(text))
        if kind == "int":
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(key, f"{key}: cannot parse {text!r} as {kind}") from None
    raise ConfigError(key, f"{key}: unsupported field type {kind}")


def parse_lines(lines: Iterable[str], source: str = "<config>", allowed_extra: Iterable[str] = ()) -> tuple[dict, dict]:
    """Parse ``key = value`` lines into (scenario overrides, extra keys).

    Blank lines and ``#`` comments are skipped.  Keys outside the scenario
    fields and ``allowed_extra`` are errors.
    """
    extra_keys = set(allowed_extra)
    values, extra = {}, {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("", f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in extra_keys:
            extra[key] = value.strip()
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(key, f"unknown key: {key}")
        values[key] = parse_value(key, value)
    return values, extra


def load_config(path: str | os.PathLike, overrides: Mapping[str, object] | None = None) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read config {p}: {exc}") from exc
    values, _ = parse_lines(text.splitlines(), str(p))
    values.update(overrides or {})
    return ScenarioConfig(**values)


def dump_config(config: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_items())
