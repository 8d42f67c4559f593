"""Exception types shared across the package."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class DataError(ValueError):
    """Malformed or unreadable input data (image files, manifests, configs)."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf.

    ``state`` holds whatever diagnostic context the raiser collected.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = dict(state or {})


class WorkspaceError(RuntimeError):
    """No feasible pose survived workspace construction.

    ``histogram`` maps a rejection reason to the number of candidates
    rejected for it.
    """

    def __init__(self, message, histogram):
        super().__init__(message)
        self.histogram = dict(histogram)
