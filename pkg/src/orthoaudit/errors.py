"""Exception and warning types shared across the package."""


class OrthoAuditError(Exception):
    """Base class for all package errors."""


class InvalidInput(OrthoAuditError):
    """An argument violates a documented precondition (non-finite values,
    out-of-range parameters, malformed configuration)."""


class ShapeMismatch(OrthoAuditError):
    """Two objects that must share dimensions do not."""


class AlignmentError(OrthoAuditError):
    """Row identifiers of two aligned objects disagree."""


class UnknownCategory(OrthoAuditError):
    """A categorical value outside its closed category set."""

    def __init__(self, message, row_id=None):
        super().__init__(message)
        self.row_id = row_id


class RankDeficient(OrthoAuditError):
    """A matrix that must be full rank is not."""


class InsufficientSamples(OrthoAuditError):
    """Too few rows for the requested statistic (non-positive degrees of
    freedom)."""


class UndefinedMetric(OrthoAuditError):
    """The metric is undefined for this input (e.g. AUC with a single
    class)."""


class MissingData(OrthoAuditError):
    """A required input (file, column, split) is absent."""


class Diverged(OrthoAuditError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class ZeroVariance(OrthoAuditError):
    """Data with no variance where variance is required."""


class SmallSampleWarning(UserWarning):
    """Fewer than ten rows per design column; the estimated projection has
    high variance."""


class DegenerateClassesWarning(UserWarning):
    """One or more classes are absent from the training labels."""


class EmptyGroupWarning(UserWarning):
    """A requested group has no members and was skipped."""
