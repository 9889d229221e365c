"""Exception types shared across the package.

CLI exit-code mapping: OSError -> 1, FormatError -> 2,
DimensionMismatch -> 3, StageOrderError -> 4.
"""


class FormatError(ValueError):
    """Malformed file content or unsupported audio/token format."""


class DimensionMismatch(ValueError):
    """Two components disagree on a tensor dimension at attach/load time."""


class StageOrderError(RuntimeError):
    """A training stage was requested before its prerequisite stage ran."""


class TrainingDiverged(RuntimeError):
    """Loss or a gradient became non-finite during training."""

    def __init__(self, step, detail=""):
        self.step = step
        super().__init__(f"training diverged at step {step}" + (f": {detail}" if detail else ""))
