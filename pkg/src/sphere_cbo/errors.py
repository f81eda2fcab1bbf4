"""Exception hierarchy shared by all modules."""


class SphereCBOError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SphereCBOError, ValueError):
    pass


class InvalidDimensionError(InvalidInputError):
    pass


class InvalidParameterError(InvalidInputError):
    pass


class DegenerateVectorError(SphereCBOError, ArithmeticError):
    """A vector too close to zero was asked to be renormalized."""


class InvalidObjectiveValueError(SphereCBOError, ArithmeticError):
    pass


class UnsupportedObjectiveError(SphereCBOError):
    pass


class ConvergenceError(SphereCBOError, RuntimeError):
    pass


class ParseError(SphereCBOError, ValueError):
    pass


class ConfigError(SphereCBOError, ValueError):
    pass
