"""Exception hierarchy shared by all solver modules."""


class FracInvError(Exception):
    """Base class for every error raised by :mod:`fracinv`."""


class DomainError(FracInvError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeMismatchError(FracInvError, ValueError):
    """Array or path lengths do not agree."""


class ResolutionError(FracInvError, ValueError):
    """The sampling grid is too coarse for the requested number of modes."""


class ConvergenceError(FracInvError, RuntimeError):
    """An iterative method stopped before reaching its tolerance.

    ``best`` carries the best iterate found so far when one exists.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics


class NonContractionError(ConvergenceError):
    """Successive Picard iterates failed to shrink."""


class DegenerateDenominatorError(FracInvError, ArithmeticError):
    """The denominator of the coefficient map dropped below its floor."""


class InadmissibleProblemError(FracInvError, ValueError):
    """Inverse-problem data violate the admissibility assumptions."""


class ScenarioError(FracInvError, ValueError):
    """A scenario document failed to parse or validate."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class SeriesOverflowError(DomainError, OverflowError):
    """A positive Mittag-Leffler argument is past the series-stability threshold."""
