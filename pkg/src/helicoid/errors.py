"""Exception types shared across the package."""


class HelicoidError(Exception):
    """Base class for all package errors."""


class MalformedTupleError(HelicoidError, ValueError):
    """An exponent tuple has the wrong arity or malformed entries."""


class RankConstraintError(HelicoidError, ValueError):
    """The rank k violates 0 <= k < (n+1)/2."""


class UnsupportedMapError(HelicoidError, ValueError):
    """A linear map is not a coordinate projection."""


class DegenerateMatrixError(HelicoidError, ValueError):
    """A d x d block of a Whitney matrix is singular.

    Attributes
    ----------
    block : tuple of int
        (row block, column block) of the first singular block.
    """

    def __init__(self, message, block):
        super().__init__(message)
        self.block = block


class InvalidExponentError(HelicoidError, ValueError):
    """A Lebesgue exponent is zero or negative where a norm is requested."""


class ResolutionError(HelicoidError, ValueError):
    """A frequency cube does not fit the grid, or resolutions disagree."""


class UndefinedSizeError(HelicoidError, ValueError):
    """A size was requested over an empty cube set."""


class SizeExceedsLambdaError(HelicoidError, ValueError):
    """The decomposition was called with size above lambda."""


class DivergenceError(HelicoidError, ValueError):
    """The endpoint sum diverges for the requested parameters."""


class SparseConstructionError(HelicoidError, RuntimeError):
    """The sparse stopping time produced too much child mass.

    Attributes
    ----------
    mass_ratio : float
        Measured sum of child measures over the parent measure.
    """

    def __init__(self, message, mass_ratio):
        super().__init__(message)
        self.mass_ratio = mass_ratio


class AnomalyError(HelicoidError, ArithmeticError):
    """A ratio has a zero denominator but a nonzero numerator."""


class ConfigError(HelicoidError, ValueError):
    """An experiment configuration is invalid."""
