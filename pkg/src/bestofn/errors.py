"""Exception hierarchy shared by all bestofn modules."""


class BestOfNError(Exception):
    """Base class for every error raised by this package."""


class InvalidInstance(BestOfNError, ValueError):
    """A ProblemInstance violates one of its invariants."""


class TooFewOptions(InvalidInstance):
    pass


class NonPositiveCost(InvalidInstance):
    pass


class QualityOutOfRange(InvalidInstance):
    pass


class NotNormalized(InvalidInstance):
    pass


class MissingInteraction(InvalidInstance):
    """Both quality and cost are asymmetric but no interaction was declared."""


class ZeroFraction(InvalidInstance):
    """A perception feature has zero abundance and could never be observed."""


class DegenerateQuality(BestOfNError, ValueError):
    pass


class PhaseNotExpired(BestOfNError):
    pass


class ToleranceExceeded(BestOfNError, ArithmeticError):
    """Mean-field integration drifted off the probability simplex."""


class StateSpaceTooLarge(BestOfNError):
    pass


class ValidationError(BestOfNError, ValueError):
    """A configuration field holds an invalid value.

    The offending field name is available as ``field``.
    """

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class UnknownKey(ValidationError):
    pass


class ParseError(BestOfNError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
