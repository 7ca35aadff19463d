"""Exception types shared across the package."""


class VolsynthError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDepth(VolsynthError, ValueError):
    """Projection or unprojection was asked for a depth <= 0."""


class BehindCamera(VolsynthError, ValueError):
    """A reprojected point ended up behind the target camera."""


class InvalidDepthPixel(VolsynthError, ValueError):
    """A depth lookup hit a pixel flagged invalid."""


class DimensionMismatch(VolsynthError, ValueError):
    """Array shapes of related inputs disagree."""


class UnknownStrategy(VolsynthError, ValueError):
    """Pose-sampling strategy name not recognized."""


class OutOfFrustum(VolsynthError, ValueError):
    """A field sample was requested outside the grid frustum or depth range."""


class CuboidMismatch(VolsynthError, ValueError):
    """Two voxel grids cover different cuboids."""


class DivergedLoss(VolsynthError, RuntimeError):
    """Optimization loss exceeded 10x its initial value."""


class FormatError(VolsynthError, ValueError):
    """A file did not match its expected binary/text format."""


class PipelineFailure(VolsynthError, RuntimeError):
    """A synthesis-loop component failed; carries the partial volume."""

    def __init__(self, message, partial_volume=None):
        super().__init__(message)
        self.partial_volume = partial_volume


class RefinerFailure(PipelineFailure):
    """The view refiner raised or produced malformed output."""


class PredictorFailure(PipelineFailure):
    """The depth predictor raised or produced malformed output."""


class ExternalEndpointError(VolsynthError, RuntimeError):
    """Base class for external refiner/depth endpoint failures; carries the job dir."""

    def __init__(self, message, job_dir=None):
        super().__init__(message)
        self.job_dir = job_dir


class EndpointTimeout(ExternalEndpointError):
    """The external process/endpoint did not answer within the timeout."""


class MalformedResponse(ExternalEndpointError):
    """The endpoint answered but the result files are missing or unreadable."""


class NonZeroExit(ExternalEndpointError):
    """The external process exited with a nonzero status."""
