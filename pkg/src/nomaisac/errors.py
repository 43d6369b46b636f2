"""Exception hierarchy shared by every module of the toolkit."""


class NomaIsacError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(NomaIsacError, ValueError):
    pass


class NotHermitian(NomaIsacError, ValueError):
    pass


class InternalConsistencyError(NomaIsacError, ArithmeticError):
    pass


class DomainError(NomaIsacError, ValueError):
    pass


class NonFiniteObjective(NomaIsacError, FloatingPointError):
    pass


class InsufficientTrials(NomaIsacError, ValueError):
    pass


class GridTooLarge(NomaIsacError, ValueError):
    pass


class AngleOutOfRange(NomaIsacError, ValueError):
    pass


class DesignMismatch(NomaIsacError, ValueError):
    pass


class InvalidPermutation(NomaIsacError, ValueError):
    pass


class InfeasibleConstraint(NomaIsacError):
    pass


class SolverFailed(NomaIsacError):
    pass


class SplitDesignMismatch(NomaIsacError, ValueError):
    pass


class ConfigError(NomaIsacError):
    """Raised for any problem with an experiment configuration document."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid value for {field!r}: {reason}")


class UnknownKey(ConfigError):
    def __init__(self, key, allowed=()):
        self.key = key
        hint = ""
        if allowed:
            hint = f"; allowed keys: {', '.join(sorted(allowed))}"
        super().__init__(f"unknown configuration key {key!r}{hint}")
