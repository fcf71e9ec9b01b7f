"""Exception types shared across the package."""


class ReactorMetaError(Exception):
    """Base class for all package-specific errors."""


class NumericalError(ReactorMetaError):
    """A computation produced NaN/Inf; the message names the offending term."""


class TrajectoryRejected(ReactorMetaError):
    """A simulated trajectory failed the physical-plausibility filter.

    The caller is expected to resample initial conditions and inputs.
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class TaskInfeasible(ReactorMetaError):
    """A task rejected too many trajectories; resample the task itself."""


class ShapeError(ReactorMetaError):
    """A parameter vector or tensor has inconsistent dimensions."""


class MissingCheckpoint(ReactorMetaError):
    """An experiment requires a model checkpoint that does not exist."""


class EmptyValidation(ReactorMetaError):
    """Min-voting was asked to select among candidates with no validation data."""


class ConfigError(ReactorMetaError):
    """An experiment config file is malformed or carries unknown keys."""
