"""Exception types shared across the package."""


class TwoStepError(Exception):
    """Base class for all errors raised by this package."""


class DataError(TwoStepError, ValueError):
    """Problems with the cohort data itself (exit code 3 in the CLI)."""


class MissingColumn(DataError):
    def __init__(self, column):
        super().__init__(f"missing column {column!r}")
        self.column = column


class NonNumericCell(DataError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}, column {column!r}: non-numeric value {value!r}")
        self.row, self.column, self.value = row, column, value


class UnknownCategoryValue(DataError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}, column {column!r}: unknown category {value!r}")
        self.row, self.column, self.value = row, column, value


class DuplicateSubjectId(DataError):
    def __init__(self, row, subject_id):
        super().__init__(f"row {row}: duplicate subject id {subject_id!r}")
        self.row, self.subject_id = row, subject_id


class SchemaMismatch(DataError):
    pass


class DegenerateClass(DataError):
    """A class would be empty (or too small) in some subset."""


class CohortTooSmall(DataError):
    pass


class SampleTooSmall(DataError):
    pass


class ZeroVariance(DataError):
    def __init__(self, message, feature=None):
        super().__init__(message)
        self.feature = feature


class RankDeficient(DataError):
    pass


class DegenerateFold(DataError):
    pass


class DimensionMismatch(TwoStepError, ValueError):
    pass


class ArityMismatch(TwoStepError, ValueError):
    pass


class EmptyVote(TwoStepError, ValueError):
    pass


class LengthMismatch(TwoStepError, ValueError):
    pass


class UndefinedRate(TwoStepError, ValueError):
    pass


class NotPositiveDefinite(TwoStepError, ValueError):
    pass


class PartitionLeak(TwoStepError, AssertionError):
    pass


class ConfigError(TwoStepError, ValueError):
    """Invalid experiment configuration (exit code 2 in the CLI)."""


class VersionMismatch(TwoStepError):
    pass


class CorruptManifest(TwoStepError):
    pass
