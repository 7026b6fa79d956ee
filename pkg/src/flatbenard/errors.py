class GeometryDegenerate(ValueError):
    """Jacobian of the flattening map dropped below the configured floor."""

    def __init__(self, min_jac, floor):
        super().__init__(f"min J = {min_jac:.6g} below floor {floor:.6g}")
        self.min_jac = min_jac
        self.floor = floor


class SolverDiverged(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = list(residuals or [])


class IncompatibleData(ValueError):
    pass


class StepRejected(ValueError):
    def __init__(self, msg, suggested_dt):
        super().__init__(msg)
        self.suggested_dt = suggested_dt


class ConstraintViolation(ValueError):
    pass


class MissingTimeLayer(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""
