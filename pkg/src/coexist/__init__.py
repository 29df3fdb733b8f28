"""Two-type branching processes in a correlated random environment.

Monte Carlo estimation of co-existence probabilities, the associated
random walk's exit from the positive quadrant, and the walk conditioned
to stay inside.  Hot loops run under numba when it is installed; set
``COEXIST_DISABLE_NUMBA=1`` to force the pure numpy kernels.
"""
__version__ = "0.1.0"

from .errors import DomainError, PreconditionError, StarvationError, WeightUnderflowError  # noqa: E402,F401
