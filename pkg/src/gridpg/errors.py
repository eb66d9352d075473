"""Exception types shared across the package."""


class GridPGError(Exception):
    """Base class for all errors raised by this package."""


class SpaceError(GridPGError):
    """Invalid search-space definition or out-of-range coordinate."""


class ShapeError(GridPGError):
    """Mismatched or invalid tensor/mask dimensions."""


class ConfigError(GridPGError):
    """Invalid configuration value or file."""


class LayoutError(GridPGError):
    """Search space is not layout-compatible with the architecture decoder."""


class EpochError(GridPGError):
    """A search epoch could not be completed (e.g. every candidate failed).

    Carries the optimizer state at the point of failure so callers can
    checkpoint before aborting.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class CheckpointError(GridPGError):
    """Missing, truncated, or otherwise unreadable checkpoint file."""


class UndefinedDistanceError(GridPGError):
    """Hausdorff distance is undefined because a class set is empty."""
