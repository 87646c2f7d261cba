"""Exception hierarchy shared by every subpackage."""


class VtparseError(Exception):
    """Base class for all library errors."""


class InvalidInputError(VtparseError, ValueError):
    pass


class TransitionError(VtparseError):
    """An action was applied in a state whose validity mask forbids it."""


class DerivationError(VtparseError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ProjectivityError(VtparseError):
    def __init__(self, message, arcs=None):
        super().__init__(message)
        self.arcs = arcs


class GuardError(VtparseError, ValueError):
    """Requested size exceeds an enumeration guard."""


class NumericError(VtparseError, ArithmeticError):
    pass


class ContractError(VtparseError):
    """A documented precondition of an operation was violated."""


class ConfigurationError(VtparseError):
    pass


class DataError(VtparseError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(DataError):
    pass


class VocabError(DataError):
    pass


class EvaluationError(VtparseError):
    pass
