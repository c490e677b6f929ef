"""Exception hierarchy shared by all adgame modules."""


class AdgameError(Exception):
    """Base class for all library errors."""


class ContractViolationError(AdgameError, ValueError):
    """An argument violated a documented precondition."""


class NumericalFailureError(AdgameError, RuntimeError):
    """A numerical kernel (eigensolver, quadrature, ...) failed to converge."""


class DivergenceError(AdgameError, RuntimeError):
    """Simulated state exceeded the blow-up guard.

    Carries the partial trajectory recorded up to the divergence point in
    ``trajectory`` (may be None when nothing was recorded).
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class InapplicableExperimentError(AdgameError, RuntimeError):
    """A diagnostic experiment's preconditions do not hold for this model."""
