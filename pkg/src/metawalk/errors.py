"""Exception hierarchy shared across the package."""


class MetawalkError(Exception):
    """Base class for all package errors."""


class ModelError(MetawalkError, ValueError):
    """Invalid chain specification (negative, NaN or infinite rates, bad support)."""


class StationaryError(MetawalkError, ValueError):
    """The chain has no unique nontrivial stationary distribution."""


class FactorizationError(MetawalkError, ValueError):
    """The interior generator cannot be symmetrized or diagonalized."""


class AccuracyError(MetawalkError, RuntimeError):
    """A numerical result failed its internal accuracy guard."""


class GuardError(MetawalkError, ValueError):
    """A practicality or CPU-budget guard was exceeded."""
