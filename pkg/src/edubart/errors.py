"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an input value or configuration violates a precondition."""


class SchemaMismatchError(InvalidInputError):
    """Raised when a feature matrix / model column schema does not line up."""


class UndefinedMetricError(InvalidInputError):
    """Raised when a metric is undefined for the given labels (single class)."""


class DegenerateResponseError(InvalidInputError):
    """Raised when a classifier is asked to fit an all-constant response."""


class InternalConsistencyError(RuntimeError):
    """Bug guard: an internal cache failed its consistency check."""
