"""Window update rules for classic AIMD and New-AIMD.

Both rules are pure functions over an immutable :class:`PolicyState`, so the
synchronous model and the packet simulator drive exactly the same code.

New-AIMD splits the congestion window into two parts::

    cwnd = baseline + gains

``baseline`` is what the flow started with, ``gains`` is everything added by
additive increase since then.  On congestion only the baseline is cut by the
decrease factor; the gains survive into the next epoch.  Classic AIMD cuts the
whole window.

Arithmetic is generic: pass :class:`fractions.Fraction` windows to get exact
results, floats for speed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction
from numbers import Real

from aimdlab.errors import ConfigError


class PolicyKind(enum.Enum):
    AIMD = "aimd"
    NEW_AIMD = "new-aimd"

    @classmethod
    def parse(cls, text: "str | PolicyKind") -> "PolicyKind":
        """Accept ``aimd``, ``new-aimd``, ``newaimd``, ``NewAIMD`` and friends."""
        if isinstance(text, PolicyKind):
            return text
        key = str(text).strip().lower().replace("_", "-")
        if key in ("aimd",):
            return cls.AIMD
        if key in ("new-aimd", "newaimd"):
            return cls.NEW_AIMD
        raise ConfigError("policy", f"unknown policy: {text!r} (expected aimd or new-aimd)")

    def __str__(self) -> str:
        return self.value


class AckMode(enum.Enum):
    """How a success signal is credited.

    ``PER_ROUND`` adds the full additive step once per window of ACKs.
    ``PER_ACK`` adds ``step / cwnd`` for every ACKed segment, which sums to
    roughly one step per round trip.
    """

    PER_ROUND = "per_round"
    PER_ACK = "per_ack"


@dataclass(frozen=True)
class PolicyParams:
    additive_step: Real = 1
    decrease_factor: Real = Fraction(1, 2)
    initial_window: Real = 1
    min_window: Real = 1
    mss: int = 1000

    def __post_init__(self):
        if not self.additive_step > 0:
            raise ConfigError("additive_step", "additive_step must be > 0")
        if not 0 < self.decrease_factor < 1:
            raise ConfigError("decrease_factor", "decrease_factor must lie in (0, 1)")
        if not self.min_window >= 1:
            raise ConfigError("min_window", "min_window must be >= 1")
        if self.initial_window < self.min_window:
            raise ConfigError("initial_window", "initial_window < min_window")
        if not self.mss > 0:
            raise ConfigError("mss", "mss must be > 0")


@dataclass(frozen=True)
class PolicyState:
    kind: PolicyKind
    params: PolicyParams
    cwnd: Real
    baseline: Real = 0
    gains: Real = 0
    epoch_index: int = 1
    loss_events: int = 0


def policy_init(kind: PolicyKind, params: PolicyParams | None = None) -> PolicyState:
    if params is None:
        params = PolicyParams()
    w = params.initial_window
    if kind is PolicyKind.NEW_AIMD:
        return PolicyState(kind, params, cwnd=w, baseline=w, gains=0)
    if kind is PolicyKind.AIMD:
        return PolicyState(kind, params, cwnd=w)
    raise ConfigError("policy", f"unhandled policy kind {kind!r}")


def on_round_ack(state: PolicyState, mode: AckMode = AckMode.PER_ROUND, scale: Real = 1) -> PolicyState:
    """Credit one success signal.

    ``scale`` is the fraction of a round that elapsed; the synchronous model
    uses it for the last partial step of an exact-arithmetic cycle.
    """
    step = state.params.additive_step * scale
    if mode is AckMode.PER_ACK:
        step = step / state.cwnd
    elif mode is not AckMode.PER_ROUND:
        raise ValueError(f"unknown ack mode {mode!r}")

    if state.kind is PolicyKind.NEW_AIMD:
        return replace(state, cwnd=state.cwnd + step, gains=state.gains + step)
    if state.kind is PolicyKind.AIMD:
        return replace(state, cwnd=state.cwnd + step)
    raise ValueError(f"unhandled policy kind {state.kind!r}")


def on_loss_event(state: PolicyState) -> PolicyState:
    """Apply one multiplicative decrease."""
    p = state.params
    if state.kind is PolicyKind.AIMD:
        cwnd = max(p.min_window, state.cwnd * p.decrease_factor)
        return replace(
            state,
            cwnd=cwnd,
            epoch_index=state.epoch_index + 1,
            loss_events=state.loss_events + 1,
        )
    if state.kind is PolicyKind.NEW_AIMD:
        cut = state.baseline * (1 - p.decrease_factor)
        baseline = state.baseline * p.decrease_factor
        cwnd = state.cwnd - cut
        if cwnd < p.min_window:
            cwnd = p.min_window
        return replace(
            state,
            cwnd=cwnd,
            baseline=baseline,
            # recomputed rather than carried so a clamp keeps cwnd == baseline + gains
            gains=cwnd - baseline,
            epoch_index=state.epoch_index + 1,
            loss_events=state.loss_events + 1,
        )
    raise ValueError(f"unhandled policy kind {state.kind!r}")
