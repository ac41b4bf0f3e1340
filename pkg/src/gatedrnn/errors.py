class GatedRNNError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GatedRNNError, ValueError):
    """Array dimensions do not agree."""


class DataError(GatedRNNError, ValueError):
    """Malformed or inconsistent input data (files, labels, corpora)."""


class NumericalError(GatedRNNError, ArithmeticError):
    """A non-finite value appeared where it must not."""


class ConfigError(GatedRNNError, ValueError):
    """Invalid experiment configuration."""
