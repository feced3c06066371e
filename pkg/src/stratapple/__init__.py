"""Online classification of strategic agents under apple-tasting and bandit feedback."""

__version__ = "0.1.0"
