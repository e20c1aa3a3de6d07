"""Exception hierarchy shared by all modules.

The CLI maps each category onto a distinct exit status, so every error a
module raises on purpose derives from one of the classes below.
"""


class TunnelTimeError(Exception):
    """Base class for errors raised deliberately by this package."""


class SchemaError(TunnelTimeError, ValueError):
    """A configuration or input object violates its schema."""


class NumericalDomainError(TunnelTimeError, ValueError):
    """Inputs fall outside the numerically meaningful domain of an operation."""


class DomainTooSmallError(NumericalDomainError):
    """Probability reached the edges of the periodic grid (wrap-around)."""


class PostSelectionError(TunnelTimeError, ValueError):
    """The requested final channel has (numerically) zero amplitude."""
