"""Exception types shared across the workbench."""


class RopebenchError(Exception):
    """Base class for all workbench-specific errors."""


class InvalidGeometry(RopebenchError):
    """Requested rope geometry does not fit the workspace."""


class OutOfWorkspace(RopebenchError):
    """A world point lies outside the unit-square workspace."""


class ShapeMismatch(RopebenchError):
    """Array arguments have incompatible shapes or lengths."""


class InsufficientForeground(RopebenchError):
    """Image has fewer foreground pixels than requested keypoints."""


class InsufficientUnits(RopebenchError):
    """Rope has fewer units than requested keypoints."""


class DegenerateGraph(RopebenchError):
    """Graph cannot support the requested operation (e.g. zero-degree vertex)."""


class NoGraph(RopebenchError):
    """Backward pass requested without a recorded computation."""


class NoSupport(RopebenchError):
    """A mask is zero everywhere, so no action pixel can be selected."""


class ConfigError(RopebenchError):
    """Hyperparameters are inconsistent with each other or with the inputs."""


class TrainingDiverged(RopebenchError):
    """Training loss became non-finite."""


class BadMagic(RopebenchError):
    """File does not start with the expected magic bytes."""


class VersionMismatch(RopebenchError):
    """File format version is not supported."""


class TruncatedFile(RopebenchError):
    """File ended before all declared records could be read."""
