"""Exception types raised across the pipeline."""


class RadcubeError(Exception):
    """Base class for all pipeline errors."""


class TargetOutOfRange(RadcubeError):
    """A target lies beyond the unambiguous range or Doppler interval."""


class ShapeMismatch(RadcubeError, ValueError):
    """An array does not have the shape required by the configuration."""


class DimMismatch(RadcubeError, ValueError):
    """Two cubes disagree on their shared Doppler/range dimensions."""


class OutOfFieldOfView(RadcubeError, ValueError):
    """A Cartesian position maps outside the cube's bin grid."""


class DivergenceDetected(RadcubeError, RuntimeError):
    """Training loss became NaN or infinite."""


class WindowTooLarge(RadcubeError, ValueError):
    """CFAR guard + training window does not fit in the cube."""


class NoCluster(RadcubeError):
    """No density cluster reached the minimum point count."""


class UndefinedMetric(RadcubeError, ValueError):
    """A metric has no ground-truth instances to be computed over."""


class BadMagic(RadcubeError, ValueError):
    """File does not start with the expected magic bytes."""


class VersionMismatch(RadcubeError, ValueError):
    """File format version is not supported."""


class TruncatedPayload(RadcubeError, ValueError):
    """File ends before the payload declared by its header."""


class ConfigError(RadcubeError, ValueError):
    """Invalid run configuration (unknown key or out-of-range value)."""
