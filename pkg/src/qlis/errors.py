"""Exception hierarchy shared by all qlis modules."""


class QlisError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(QlisError):
    """An input value violates a documented precondition or invariant."""


class CoverageError(QlisError):
    """A grid or integration range does not cover the required support.

    The message names the offending quantity and the span that would be
    needed, so callers can widen the grid and retry.
    """


class CapabilityError(QlisError):
    """The request exceeds the documented desk-scale limits (photon number,
    Hilbert-space dimension)."""


class ConfigurationError(QlisError):
    """An object is not configured for the requested operation (e.g. a
    raising/lowering correlator on a channel without a dipole split)."""


class TruncationOverflowError(QlisError):
    """A Fock-space operation would populate states above the photon cutoff
    beyond tolerance.  Raised instead of silently clipping."""


class GateKindError(QlisError):
    """A detection gate of the wrong kind (time vs frequency) was passed."""
