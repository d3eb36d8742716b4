"""Exception hierarchy.

Validation errors (bad inputs, malformed files, violated preconditions) and
numerical failures (degenerate variance, singular designs) are kept apart so
the command line can map them to distinct exit codes.
"""


class TendonScoreError(Exception):
    """Base class for all package errors."""


class ValidationError(TendonScoreError, ValueError):
    """Input failed a precondition or format check."""


class FormatError(ValidationError):
    """Malformed file header or payload."""


class LengthError(ValidationError):
    """Payload length disagrees with declared dimensions."""


class ShapeError(ValidationError):
    """Array or weight shapes do not chain."""


class DomainError(ValidationError):
    """Scalar argument outside its admissible range."""


class PreconditionError(ValidationError):
    """Operation precondition not met."""


class LabelError(ValidationError):
    """Rows from different studies were mixed."""


class EmptyInputError(ValidationError):
    """Nothing to operate on."""


class DegenerateDataError(ValidationError):
    """Training data lacks one of the two classes."""


class NumericalError(TendonScoreError, ArithmeticError):
    """A computation is numerically ill-posed."""


class DegenerateVarianceError(NumericalError):
    """All rows identical, so there is no variance to decompose."""


class ZeroVarianceError(NumericalError):
    """A constant series was passed to a correlation."""


class SingularDesignError(NumericalError):
    """Regression design matrix is rank deficient."""


class PipelineError(TendonScoreError):
    """A pipeline stage failed; wraps the original cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
