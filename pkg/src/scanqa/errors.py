"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model/run configuration: bad dimensions, shape mismatches."""


class NumericFault(RuntimeError):
    """Non-finite value encountered; the message names the offending stage."""


class StaleTapeError(RuntimeError):
    """A tape was replayed after its parameters were mutated."""


class InvalidHandle(ValueError):
    """A node handle does not belong to the tape it was used with."""


class SamplerError(ValueError):
    """Batch plan construction failed (empty class set, bad sizes)."""


class GeneratorError(ValueError):
    """Synthetic dataset request cannot be satisfied."""


class SplitError(ValueError):
    """Subject-level split cannot be constructed."""


class DatasetFormatError(ValueError):
    """On-disk dataset directory is malformed or truncated."""
