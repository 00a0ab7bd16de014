"""Exception hierarchy shared across the package."""


class RoboutError(Exception):
    """Base class for all errors raised by robout."""


class LoadError(RoboutError):
    """A CSV file could not be turned into a Dataset.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    column label or index involved, when known.
    """

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class RaggedRowError(LoadError):
    pass


class NonNumericError(LoadError):
    pass


class NonFiniteError(LoadError):
    pass


class MissingColumnError(LoadError):
    pass


class TooFewRowsError(LoadError):
    pass


class SelectionError(RoboutError):
    """The penalty path never reached the requested support size."""


class RankError(RoboutError):
    """Every elemental subset was singular, so no candidate fit exists."""


class ContractViolation(RoboutError):
    """An input broke a documented precondition (e.g. zero scale with nonzero residuals)."""


class InfeasibleError(RoboutError):
    """A pipeline variant cannot be computed on this dataset.

    Raised instead of crashing so callers can record the cell as infeasible.
    """

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class StageError(RoboutError):
    """Wraps an unexpected failure with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
