"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, NumericError -> 4.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateInputError(ValueError):
    """Input is mathematically degenerate (e.g. zero vector for cosine)."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Problem with input data files or records."""


class ParseError(DataError):
    """Malformed input file; message carries the offending line number."""


class PartitionError(DataError):
    """Requested split ratios cannot be achieved on this graph."""


class MetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. AUPR with no positives)."""


class GenerationError(RuntimeError):
    """Synthetic data generation failed after bounded retries."""


class NumericError(ArithmeticError):
    """Non-finite values encountered where finite numbers are required."""
