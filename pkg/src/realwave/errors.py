"""Exception hierarchy shared by all modules."""


class RealwaveError(Exception):
    """Base class for every error raised by the package."""


class ModelError(RealwaveError, ValueError):
    """A module precondition failed while computing."""


# wavepacket core
class GridTooCoarse(ModelError):
    pass


class BoundaryLeak(ModelError):
    pass


class NotNormalized(ModelError):
    pass


class GridMismatch(ModelError):
    pass


class SpeciesMismatch(ModelError):
    pass


class NoOverlap(ModelError):
    pass


class TooManyParts(ModelError):
    pass


# evolution
class NormDrift(ModelError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


# detection
class WidthTooSmall(ModelError):
    pass


class EnsembleTooSmall(ModelError):
    pass


# spin measurement
class DegenerateAxes(ModelError):
    pass


# quantum statistics
class EmptySource(ModelError):
    pass


class Overfilled(ModelError):
    pass


class DivergentOccupancy(ModelError):
    pass


class ConfigError(RealwaveError):
    """Scenario file failed validation; ``field`` is a dotted path."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
