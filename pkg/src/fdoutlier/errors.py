"""Exception hierarchy.

Everything raised on bad input derives from :class:`DataError` so the CLI can
map it to exit status 2 in one place.
"""


class DataError(ValueError):
    """Input data violates a documented precondition."""


class EmptyInputError(DataError):
    pass


class FormatError(DataError):
    pass


class ParseError(DataError):
    pass


class DomainError(DataError):
    """Argument outside the domain of a function."""


class SplitError(DataError):
    pass


class UnsupportedShapeError(DataError):
    pass


class IncompleteBasisError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class ContaminationError(DataError):
    """PCA features of rows used to fit the basis leaked into a test."""


class StageError(DataError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, feature_set, cause):
        self.stage = stage
        self.feature_set = feature_set
        self.cause = cause
        super().__init__(f"[{stage}, feature set {feature_set}] {cause}")
