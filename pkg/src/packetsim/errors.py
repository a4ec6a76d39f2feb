"""Exception types shared across the simulator."""


class PacketSimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PacketSimError):
    """Invalid generator, policy, or sweep configuration."""


class ValidationError(PacketSimError):
    """A workload or trace violates a structural invariant."""


class ParseError(PacketSimError):
    """A workload file could not be parsed; the message names the line."""


class JobRejectedError(PacketSimError):
    """A job can never run on the configured cluster."""


class EngineInvariantError(PacketSimError):
    """Internal engine invariant broken; signals a policy or engine bug."""


class MetricsError(PacketSimError):
    """Metrics requested over a degenerate or empty measurement window."""
