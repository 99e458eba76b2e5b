"""Exception types shared across the solver."""


class ConfigurationError(ValueError):
    """Invalid parameters, grids, or initial data.

    ``key`` names the offending configuration entry when one is known
    (``"physics.delta"`` style), so the CLI can report it.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class GridMismatchError(ValueError):
    """Fields combined on different grids."""


class CFLError(ValueError):
    """Time step too large for an explicit transport stage."""

    def __init__(self, message, dt=None):
        super().__init__(message)
        self.dt = dt


class SolverError(RuntimeError):
    """A linear solve failed to reach its residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StageError(RuntimeError):
    """Wraps a failure inside one stage of the coupled step."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
