"""AIMD and New-AIMD congestion control, in a synchronous model and a packet simulator."""

from aimdlab.congestion_policy import (
    AckMode,
    PolicyKind,
    PolicyParams,
    PolicyState,
    on_loss_event,
    on_round_ack,
    policy_init,
)
from aimdlab.errors import (
    AimdLabError,
    ConfigError,
    DomainError,
    ProtocolError,
    SimulationError,
)

__version__ = "0.1.0"

__all__ = [
    "AckMode",
    "AimdLabError",
    "ConfigError",
    "DomainError",
    "PolicyKind",
    "PolicyParams",
    "PolicyState",
    "ProtocolError",
    "SimulationError",
    "on_loss_event",
    "on_round_ack",
    "policy_init",
]
