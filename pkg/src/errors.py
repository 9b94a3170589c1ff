"""
Exception hierarchy for the microcc laboratory.

Every error raised on purpose by the package derives from MicroccError so the
CLI can map it to exit code 1 without swallowing programming errors.
"""


class MicroccError(Exception):
    """Base class for all errors raised by the package."""


class InvalidInputError(MicroccError, ValueError):
    """Non-finite samples or coefficients, or otherwise malformed data."""


class ShapeError(MicroccError, ValueError):
    """Grid mismatch or fiber-rank mismatch between operands."""


class InvalidParameterError(MicroccError, ValueError):
    """A scalar parameter is outside its admissible range."""


class CutoffTooLargeError(InvalidParameterError):
    """Frequency cutoff reaches the Nyquist band of the grid."""


class FrequencyOverflowError(InvalidParameterError):
    """An oscillation would alias on the grid (k|xi0| + bandwidth >= N/2)."""


class UndefinedAtZeroError(MicroccError, ValueError):
    """A principal symbol was evaluated at the zero covector."""


class InvalidCovectorError(MicroccError, ValueError):
    """Zero covector passed where a nonzero one is required."""


class DegenerateChartError(MicroccError, ValueError):
    """A diffeomorphism has a singular jacobian at a sample point."""


class DegenerateMetricError(MicroccError, ValueError):
    """A metric or bundle metric is (numerically) degenerate."""


class CoverFailureError(MicroccError, ValueError):
    """Some grid node is not covered by any ball of a partition of unity."""

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class HypothesisViolationError(MicroccError):
    """A lemma hypothesis (e.g. Re Q >= 0 on the cone) fails on the sample."""


class ConfigError(MicroccError):
    """Unresolvable registry name or malformed scenario configuration."""


class OutputError(MicroccError, OSError):
    """A report or table could not be written; the message names the path."""


class ReportSchemaError(MicroccError):
    """A finished report does not match the shipped report schema."""
