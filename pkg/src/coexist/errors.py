"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameter outside the domain where an operation is defined."""


class PreconditionError(ValueError):
    """Input violates a documented precondition."""


class StarvationError(RuntimeError):
    """A sampler produced too few usable samples to report an estimate."""


class WeightUnderflowError(StarvationError):
    """All importance weights of a particle ensemble vanished."""
