"""Exception types shared across the package."""


class SmplTrackError(Exception):
    """Base class for all smpltrack errors."""


class DegenerateInput(SmplTrackError):
    """An input is numerically degenerate (zero norm, parallel vectors, ...)."""


class DimensionMismatch(SmplTrackError):
    """Array shapes are inconsistent with each other or with the model."""


class ParseError(SmplTrackError):
    """A file could not be parsed into the expected schema."""


class InvariantViolation(SmplTrackError):
    """A structural invariant of a loaded or constructed object is broken."""


class BehindCamera(SmplTrackError):
    """A point fell behind the camera plane during projection."""

    def __init__(self, index: int):
        super().__init__(f"point {index} is behind the camera")
        self.index = index


class InsufficientConstraints(SmplTrackError):
    """Not enough valid observations to determine the unknowns."""


class NumericalFailure(SmplTrackError):
    """An optimization could not make progress within its damping budget."""


class UnliftableDetection(SmplTrackError):
    """A detection carries neither body parameters nor 2D keypoints."""


class NonMonotoneFrame(SmplTrackError):
    """Frames were fed to the tracker out of order."""


class DegenerateConfiguration(SmplTrackError):
    """A point configuration is too degenerate for the requested alignment."""


class NoValidKeypoints(SmplTrackError):
    """Every keypoint has zero confidence; the metric is undefined."""
