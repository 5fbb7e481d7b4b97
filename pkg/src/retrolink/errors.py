"""Exception hierarchy shared by all retrolink modules."""


class RetrolinkError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometryError(RetrolinkError, ValueError):
    pass


class DegenerateGeometryError(RetrolinkError, ValueError):
    pass


class InvalidParameterError(RetrolinkError, ValueError):
    pass


class ShapeError(RetrolinkError, ValueError):
    pass


class SingularImpedanceError(RetrolinkError, ZeroDivisionError):
    pass


class DivergenceError(RetrolinkError, RuntimeError):
    """The power cycle grew without bound or produced non-finite fields.

    The partial trace (with ``divergence_flag`` set) is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NumericalOverflowError(DivergenceError):
    pass


class NotConvergedError(RetrolinkError, RuntimeError):
    pass


class InconclusiveBeamwidthError(RetrolinkError, ValueError):
    pass


class EmptyFovError(RetrolinkError, ValueError):
    pass


class BracketError(RetrolinkError, ValueError):
    pass


class CalibrationError(RetrolinkError, RuntimeError):
    pass


class DegenerateOracleError(RetrolinkError, ValueError):
    pass


class ConfigError(RetrolinkError, ValueError):
    pass
