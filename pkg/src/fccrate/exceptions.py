"""Exception hierarchy shared by every fccrate module."""


class FccError(Exception):
    """Base class for all fccrate errors."""


class InvalidSpec(FccError, ValueError):
    """A simulator spec violates its invariants."""


class NonConvergence(FccError, RuntimeError):
    """The charge simulation stopped advancing SOC."""


class InvalidInterval(FccError, ValueError):
    """SOC or time is not strictly increasing over an interval."""


class MissingEntries(FccError, ValueError):
    """A per-SOC curve has nulls where values are required."""


class EmptyCurve(FccError, ValueError):
    """A per-SOC curve has no entries in the requested range."""


class TooSparse(FccError, ValueError):
    """Fewer known curve entries than needed to interpolate."""


class InsufficientData(FccError, ValueError):
    """Too few SOC transitions to compute a charging rate."""


class NoCCPhase(FccError, ValueError):
    """No constant-current phase is observable in the data."""


class FitDiverged(FccError, RuntimeError):
    """Nonlinear least squares did not converge."""


class InsufficientSamples(FccError, ValueError):
    """A device model has fewer samples than the reference floor."""
