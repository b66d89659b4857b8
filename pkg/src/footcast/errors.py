"""Exception types shared across the package."""


class FootcastError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class ConfigurationError(FootcastError, ValueError):
    kind = "configuration"


class OutOfBoundsError(FootcastError):
    kind = "out_of_bounds"


class EmptyScanError(FootcastError):
    kind = "empty_scan"


class StructureError(FootcastError, ValueError):
    """Array shapes do not match the network layout."""

    kind = "structure"


class InsufficientSamplesError(FootcastError):
    kind = "insufficient_samples"


class WeightsFormatError(FootcastError):
    kind = "weights_format"


class TrainingDivergedError(FootcastError):
    kind = "training_diverged"

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class PlanningFailure(FootcastError):
    kind = "planning_failure"


class MissingInputError(FootcastError):
    kind = "missing_input"
