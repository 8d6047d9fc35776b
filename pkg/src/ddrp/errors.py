"""Exception hierarchy shared by every ddrp module."""


class DdrpError(Exception):
    """Base class for all library errors."""


class DimensionError(DdrpError, ValueError):
    pass


class SymmetryError(DimensionError):
    pass


class EmptyDataError(DdrpError, ValueError):
    pass


class ConfigurationError(DdrpError, ValueError):
    pass


class ConvergenceError(DdrpError, ArithmeticError):
    pass


class SingularityError(DdrpError, ArithmeticError):
    pass


class DegenerateCovarianceError(SingularityError):
    pass


class StepSizeError(DdrpError, ArithmeticError):
    pass


class LabelError(DdrpError, ValueError):
    pass


class SchemaError(DdrpError, ValueError):
    pass


class ParseError(DdrpError, ValueError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
