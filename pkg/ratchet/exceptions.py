class RatchetError(Exception):
    """Base exception for ratchet-lab errors"""


class ConfigError(RatchetError):
    """Raised when an experiment configuration is invalid"""


class AcceptanceError(RatchetError):
    """Raised when a compare run misses an acceptance threshold"""
