"""Exception hierarchy shared across the package."""


class MixtError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(MixtError):
    """Reshape target does not preserve the element count."""


class InvalidPermutation(MixtError):
    """Axis permutation is not a permutation of 0..rank-1."""


class AxisOutOfRange(MixtError):
    """Axis index outside the tensor rank."""


class AxisLengthMismatch(MixtError):
    """Paired contraction axes have different lengths."""


class InvalidLength(MixtError):
    """Pad/slice target length violates the pre-condition."""


class DimensionMismatch(MixtError):
    """Operand dimensions incompatible with the operator or matrix."""


class InvalidConfig(MixtError):
    """Model or run configuration violates its invariants."""


class PlanInvalid(MixtError):
    """Compression plan incompatible with the model or architecture."""


class NonFiniteLoss(MixtError):
    """Training produced a NaN/Inf loss; run aborted."""


class ZeroVector(MixtError):
    """A zero hidden state left a layer pair with no valid cosine."""


class LayerCountMismatch(MixtError):
    """Similarity maps cover different numbers of layers."""


class EmptyPairSet(MixtError):
    """A drift summary was requested over an empty layer-pair set."""


class DegenerateFit(MixtError):
    """Regression input does not determine a fit."""
