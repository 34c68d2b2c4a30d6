"""Exception types shared across the package."""


class DegenerateDistributionError(ValueError):
    """A covariance matrix is not positive definite (Cholesky failed)."""


class IndefiniteUpdateError(DegenerateDistributionError):
    """A distribution update produced an indefinite covariance matrix."""


class ConstrainedUpdateError(RuntimeError):
    """The KL/entropy-constrained fit could not satisfy its constraints.

    Carries solver diagnostics so callers can report failure rates.
    """

    def __init__(self, message, *, eta=None, omega=None, kl=None, entropy_drop=None):
        super().__init__(message)
        self.eta = eta
        self.omega = omega
        self.kl = kl
        self.entropy_drop = entropy_drop
