"""Exception types raised across the toolkit."""


class QFoundError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class DimensionMismatch(QFoundError):
    pass


class LabelError(QFoundError):
    pass


class InvalidOperator(QFoundError):
    pass


class NotConditionallyIndependent(QFoundError):
    pass


class DecompositionNumericallyDegenerate(QFoundError):
    pass


class ModelInvalid(QFoundError):
    pass


class NotDecohered(QFoundError):
    pass


class ZeroProbabilityOutcome(QFoundError):
    pass


class DynamicalParadox(QFoundError):
    pass


class ConvergenceFailure(QFoundError):
    pass


class ParameterOutOfRange(QFoundError):
    pass


class TriplesNotAntiDistinguishable(QFoundError):
    pass


class GenerationBudgetExceeded(QFoundError):
    pass


class SchemaError(Exception):
    """Malformed input document (CLI exit code 2)."""
