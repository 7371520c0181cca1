"""Exception hierarchy shared across the package."""


class ArisError(Exception):
    """Base class for all package errors."""


class ScenarioError(ArisError, ValueError):
    """Malformed scenario document or a parameter outside its domain."""


class InfeasibleScenario(ScenarioError):
    """Scenario is well-formed but its boundary conditions cannot be met."""


class GeometryError(ArisError, ValueError):
    """Two positions coincide where a link distance must be positive."""


class StallError(ArisError, ValueError):
    """Speed dropped below the fixed-wing stall floor ``v_min``."""


class ModelDomainError(ArisError, ValueError):
    """Energy accounting left its physical domain (non-positive total energy)."""


class InfeasibleError(ArisError):
    """The trajectory optimizer could not satisfy the constraints.

    ``residuals`` carries the last constraint residuals, ``step`` the
    closed-loop step at which the failure happened (None for a single solve).
    """

    def __init__(self, message, residuals=None, step=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})
        self.step = step
