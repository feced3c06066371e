class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ScaleGuardError(RuntimeError):
    """A brute-force computation was asked to run beyond its size guard."""


class ProtocolError(RuntimeError):
    """An online learner was fed observations that break the interaction protocol."""


class InsufficientSamplesError(RuntimeError):
    """A Monte-Carlo conditioning event occurred too rarely."""
