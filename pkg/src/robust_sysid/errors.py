"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, dimensions or configuration input."""


class InsufficientRolloutsError(ConfigurationError):
    """Fewer rollouts than buckets required by the confidence level."""

    def __init__(self, n_rollouts, required):
        self.n_rollouts = n_rollouts
        self.required = required
        super().__init__(
            f"insufficient rollouts: got N={n_rollouts}, need at least {required}"
        )


class ExcitationDeficiencyError(ArithmeticError):
    """The input Gram matrix of a bucket is (numerically) singular."""

    def __init__(self, lambda_min, lambda_max, bucket=None):
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        self.bucket = bucket
        where = "" if bucket is None else f" in bucket {bucket}"
        super().__init__(
            f"excitation deficiency{where}: lambda_min={lambda_min:.3e}, "
            f"lambda_max={lambda_max:.3e}"
        )


class NonConvergenceError(ArithmeticError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations (residual={residual:.3e})"
        )


class OrderTooHighError(ConfigurationError):
    """Requested realization order exceeds the numerical rank of the Hankel matrix."""

    def __init__(self, order, singular_values):
        self.order = order
        self.singular_values = list(singular_values)
        sv = ", ".join(f"{s:.3e}" for s in self.singular_values)
        super().__init__(f"order too high: n={order}, Hankel singular values [{sv}]")
