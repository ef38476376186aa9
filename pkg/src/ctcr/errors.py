"""Exception types raised across the estimator."""


class CtcrError(Exception):
    """Base class for all estimator errors."""


class AngleNearPi(CtcrError, ValueError):
    """Relative rotation too close to pi for the principal logarithm.

    Usually means the grid is too coarse for the motion being estimated.
    """


class AngleTooLarge(CtcrError, ValueError):
    pass


class BadDimensions(CtcrError, ValueError):
    pass


class DimensionMismatch(CtcrError, ValueError):
    pass


class OutOfRange(CtcrError, IndexError):
    pass


class OutOfInterval(CtcrError, ValueError):
    pass


class EmptyMask(CtcrError, ValueError):
    pass


class NotPositiveDefinite(CtcrError, ArithmeticError):
    pass


class BandViolation(CtcrError, ValueError):
    """A factor couples nodes that differ in both arclength and time."""


class DivergedNaN(CtcrError, ArithmeticError):
    pass


class BadSpec(CtcrError, ValueError):
    pass


class LengthMismatch(CtcrError, ValueError):
    pass


class ArclengthMismatch(CtcrError, ValueError):
    pass


class MixedQuery(CtcrError, ValueError):
    pass


class ParseError(CtcrError, ValueError):
    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}:{column}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
        self.column = column
