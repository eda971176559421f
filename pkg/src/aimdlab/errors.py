"""Exception hierarchy shared across the package."""


class AimdLabError(Exception):
    """Base class for every error raised by aimdlab."""


class ConfigError(AimdLabError, ValueError):
    """Invalid configuration value.

    ``key`` names the offending field so front ends can report it.
    """

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class DomainError(AimdLabError, ValueError):
    """A formula was evaluated outside its domain."""


class SimulationError(AimdLabError, RuntimeError):
    """The event loop reached an inconsistent or stalled state."""


class ProtocolError(SimulationError):
    """A transport endpoint received a segment that cannot exist."""
