"""Exception types shared across the package."""


class OptembedError(Exception):
    """Base class for all package errors."""


class NumericalFailure(OptembedError):
    """Simplex pivot magnitudes stayed below tolerance after refactorization."""


class TimeLimitError(OptembedError):
    """MIP time limit hit before any incumbent was found."""


class UnboundedError(OptembedError):
    """A MIP relaxation (or big-M region) is unbounded."""


class ParseError(OptembedError):
    """Malformed LP file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(OptembedError):
    """Model document does not match the expected schema."""


class DimensionMismatch(OptembedError):
    """Input vector length disagrees with the model's feature space."""


class SingularDesign(OptembedError):
    """Least-squares design matrix is rank deficient and ridge is zero."""


class NotBinaryLabels(OptembedError):
    """Classification trainer received labels outside {0, 1}."""


class NoReachableLeaf(OptembedError):
    """Fixed context w violates every root-to-leaf path of a tree."""


class UnboundedRegion(OptembedError):
    """Big-M search region has no finite upper bound."""


class UnboundedActivation(OptembedError):
    """Activation bounds for an MLP node could not be derived."""


class NotDecomposable(OptembedError):
    """Problem does not meet the per-leaf decomposition preconditions."""


class NetworkDisconnected(OptembedError):
    """A delivery node is unreachable from every source."""


class BinaryVariablesPresent(OptembedError):
    """Column selection requires an all-continuous problem."""
