"""Exception hierarchy shared by all modules."""


class BlabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(BlabError, ValueError):
    """A point lies outside the open unit disk (or outside the truncated disk)."""


class WeightSpecError(BlabError, ValueError):
    """The weight is malformed or has a non-positive Laplacian."""


class ClassificationError(BlabError):
    """Empirical class constants are unbounded at the sampled scale."""


class PreconditionError(BlabError):
    """A documented precondition of an operation does not hold."""


class QuadratureError(BlabError, ValueError):
    """Degenerate quadrature parameters."""


class IntegrationError(BlabError, FloatingPointError):
    """The integrand produced NaN; ``node`` carries the offending location."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class EmptyRegionError(BlabError):
    """A region-restricted integral selected no quadrature node."""


class ModeError(BlabError):
    """Operation requested for the wrong kernel representation."""


class ResolutionError(BlabError):
    """Series truncation or quadrature cannot resolve the request.

    ``suggested`` holds a degree (or node count) that would resolve it, when known.
    """

    def __init__(self, message, suggested=None):
        super().__init__(message)
        self.suggested = suggested


class DegreeReductionError(BlabError):
    """Gram matrix is numerically singular; ``achievable`` is the largest usable degree."""

    def __init__(self, message, achievable):
        super().__init__(message)
        self.achievable = achievable


class CoveringError(BlabError):
    """Covering construction or partition of unity failed; ``witness`` is a point."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DivisionGuardError(BlabError):
    """A normalized kernel vanished inside the support of a cut-off."""


class ConfigError(BlabError, ValueError):
    """Run configuration does not validate."""
