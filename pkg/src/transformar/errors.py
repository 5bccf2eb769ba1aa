"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class TransformARError(Exception):
    """Base class for every error raised deliberately by this package."""


class ConfigError(TransformARError, ValueError):
    """Invalid hyperparameter, option value or configuration file."""


class ShapeError(TransformARError, ValueError):
    """Tensor or image dimensions do not match what an operation needs."""


class BackwardError(TransformARError, RuntimeError):
    """``backward`` was called on something that is not a scalar loss."""


class DataError(TransformARError, ValueError):
    """Unreadable or invalid input data (manifests, images, weight files)."""


class ManifestError(DataError):
    pass


class ImageFormatError(DataError):
    pass


class WeightFileError(DataError):
    """Base class for weight-file problems."""


class WeightFormatError(WeightFileError):
    """Bad magic bytes or unsupported format version."""


class TruncatedWeightFileError(WeightFileError):
    pass


class UnknownDtypeError(WeightFileError):
    pass


class WeightShapeError(WeightFileError):
    pass


class MissingTensorError(WeightFileError):
    pass


class UnexpectedTensorError(WeightFileError):
    pass


class NumericError(TransformARError, ArithmeticError):
    """A computation produced or received non-finite or degenerate values."""


class DegenerateInputError(NumericError, ValueError):
    """Input carries no usable information (constant vector, zero norm...)."""
