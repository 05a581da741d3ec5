"""Exception hierarchy shared by every gmlab module."""


class GMLabError(Exception):
    """Base class for all errors raised by gmlab."""


class DomainError(GMLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class NonIntegrableInner(GMLabError):
    """The inner integral of 1/k is not finite at a probe point."""


class GridTooCoarse(GMLabError):
    """Finite-difference noise exceeds the requested tolerance."""


class EvaluationError(GMLabError):
    """A nonlinearity produced an undefined ratio at a probe point."""


class ProfileMismatch(GMLabError):
    """A profile was built from a different k than the one supplied."""


class SingularMatrix(GMLabError):
    """A linear system could not be factorized."""


class NewtonStall(GMLabError):
    """Damped Newton could not decrease the residual."""


class JacobianSingular(GMLabError):
    """The Newton Jacobian is singular at the current iterate."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class BlowUp(GMLabError):
    """An initial value trajectory left the bounded state region."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class NoConvergence(GMLabError):
    """An iterative solver exhausted its budget.

    ``best_residual`` and ``last`` carry the best residual norm seen and the
    last iterate so callers can report diagnostics.
    """

    def __init__(self, message, best_residual=None, last=None, iterations=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.last = last
        self.iterations = iterations


class GridMismatch(GMLabError):
    """Two nodal profiles do not share a grid."""


class DegenerateProfile(GMLabError):
    """A profile is not positive where a boundary rate is requested."""


class ConfigError(GMLabError, ValueError):
    """An experiment configuration failed validation."""
