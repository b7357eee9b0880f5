"""Exception hierarchy shared by all markerfind modules."""

from __future__ import annotations


class MarkerFindError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MarkerFindError, ValueError):
    """An argument is outside its documented range."""


class PnmError(MarkerFindError, ValueError):
    """Base class for PNM parse failures."""


class PnmMagicError(PnmError):
    pass


class PnmHeaderError(PnmError):
    pass


class PnmMaxvalError(PnmError):
    pass


class PnmTruncatedError(PnmError):
    pass


class DegenerateError(MarkerFindError, ValueError):
    """Geometry collapsed: duplicate, collinear or zero-extent input."""


class NumericalError(MarkerFindError, ArithmeticError):
    """A linear system or matrix turned out singular."""


class InfinityError(NumericalError):
    """A point was mapped onto the line at infinity."""


class BehindCameraError(MarkerFindError, ValueError):
    """A projected point has non-positive depth."""


class UndefinedCorrelationError(MarkerFindError, ValueError):
    """Correlation requested on a zero-variance image."""


class NoStructureError(MarkerFindError, ValueError):
    """A refinement window carries no gradient structure."""


class NotFoundError(MarkerFindError):
    """The requested target is not visible in the image."""
