"""Exception types raised across the package."""


class PointNotFoundError(LookupError):
    """A query point lies outside the meshed domain."""


class NewtonError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class SingularSystemError(RuntimeError):
    """A reduced linear system is numerically singular."""

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class StageDependencyError(RuntimeError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, stage, missing):
        super().__init__(f"stage '{stage}' requires missing artifact: {missing}")
        self.stage = stage
        self.missing = missing
