"""Exception hierarchy shared by all stefan modules."""


class StefanError(Exception):
    """Base class for every error raised by this package."""


class SimplexError(StefanError, ValueError):
    pass


class NegativeEntry(SimplexError):
    pass


class SumViolation(SimplexError):
    pass


class SimplexViolation(SimplexError):
    """A field or profile left the unit simplex at a given cell."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class PreconditionError(StefanError, ValueError):
    pass


class SingularSystem(StefanError, ArithmeticError):
    pass


class EvaluationDomain(StefanError, ValueError):
    pass


class GridMismatch(StefanError, ValueError):
    pass


class StepStalled(StefanError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NonPositiveH0(StefanError, ValueError):
    pass


class ParseError(StefanError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ValidationError(StefanError, ValueError):
    def __init__(self, key, message=None):
        super().__init__(key if message is None else f"{key}: {message}")
        self.key = key
