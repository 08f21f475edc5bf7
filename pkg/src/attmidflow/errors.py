"""Exception types raised across the package.

Everything a caller can reasonably recover from derives from :class:`FlowError`,
which is what the command line maps to exit code 1.
"""


class FlowError(Exception):
    """Base class for domain errors."""


class ShapeError(FlowError, ValueError):
    """Tensor or array shapes do not satisfy an operation's contract."""


class GraphError(FlowError, RuntimeError):
    """Misuse of the recorded computation graph (e.g. a second backward)."""


class FloFormatError(FlowError, ValueError):
    """A ``.flo`` file is malformed."""


class SceneError(FlowError, ValueError):
    """A synthetic scene description violates its constraints."""


class CheckpointError(FlowError, ValueError):
    """A checkpoint file is malformed or belongs to a different model."""


class TrainingDiverged(FlowError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, iteration: int, batch_seed: int, indices):
        self.iteration = iteration
        self.batch_seed = batch_seed
        self.indices = list(indices)
        super().__init__(
            f"non-finite loss at iteration {iteration} "
            f"(batch seed {batch_seed}, sample indices {self.indices})"
        )
