"""Exception types shared across the package."""


class DctAttackError(Exception):
    """Base class for all errors raised by this package."""


class PatchLayoutError(DctAttackError):
    """Image or block geometry is inconsistent with the requested patch layout."""


class DegenerateImageError(DctAttackError):
    """Every patch of the image is constant, so variance weights are undefined."""


class BudgetExhaustedError(DctAttackError):
    """The query ledger has no budget left for another oracle call."""


class DirectionFailureError(DctAttackError):
    """A single search direction never crossed the decision boundary in range."""


class InitializationFailureError(DctAttackError):
    """No sampled starting direction crossed the decision boundary."""


class OracleConnectionError(DctAttackError):
    """A remote oracle endpoint could not be reached."""


class OracleProtocolError(DctAttackError):
    """A remote oracle replied with a malformed or incomplete message."""


class OracleServerError(DctAttackError):
    """A remote oracle reported a server-side failure."""
