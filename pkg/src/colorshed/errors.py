class ShedderError(Exception):
    """Base class for package errors."""


class InputError(ShedderError, ValueError):
    """Malformed or out-of-range input."""


class ConfigError(ShedderError, ValueError):
    """Inconsistent configuration (grids, quantization, query colors)."""


class TrainingError(InputError):
    """Training data cannot produce a model."""


class NotMeasuredError(ShedderError, RuntimeError):
    """A latency estimate was requested before any sample arrived."""
