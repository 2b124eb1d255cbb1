"""Bucketed least squares with geometric-median boosting.

The N rollouts are split into K = ceil(32 ln(1/delta)) disjoint buckets of M
rollouts. Each bucket yields an OLS estimate ``G_j = Y_j U_j^T (U_j U_j^T)^-1``
of the Markov matrix; the estimates are fused by their Frobenius geometric
median.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import (
    ConfigurationError,
    ExcitationDeficiencyError,
    InsufficientRolloutsError,
)
from .geomedian import DEFAULT_MAX_ITER, DEFAULT_TOL, weiszfeld
from .lti import Dataset, Rollout

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
BOOSTING_Q = 1.0 / 8.0
EXCITATION_CONSTANT = 12.0
DEFICIENT_MODES = ("raise", "pinv")


def bucket_count(delta: float) -> int:
    """``ceil(32 ln(1/delta))``, robust to round-off when the product is an integer."""
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    x = 32.0 * math.log(1.0 / delta)
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, x):
        return max(1, int(nearest))
    return max(1, math.ceil(x))


@dataclass(frozen=True)
class BucketPlan:
    K: int
    M: int
    N: int
    assignment: np.ndarray  # bucket index per rollout, -1 when discarded

    @property
    def discarded(self) -> int:
        return self.N - self.K * self.M

    @property
    def buckets(self) -> List[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        used = order[self.assignment[order] >= 0]
        return [used[j * self.M:(j + 1) * self.M] for j in range(self.K)]


def plan_buckets(N: int, delta: float, shuffle_seed=None) -> BucketPlan:
    """Assign the first ``K*M`` rollouts to contiguous buckets.

    With ``shuffle_seed`` the rollout order is permuted first. Rollouts beyond
    ``K*M`` are discarded.
    """
    K = bucket_count(delta)
    if N < K:
        raise InsufficientRolloutsError(N, K)
    M = N // K
    order = np.arange(N)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(N)
    assignment = np.full(N, -1, dtype=int)
    assignment[order[: K * M]] = np.repeat(np.arange(K), M)
    if N - K * M:
        logger.info("bucketing discards %d of %d rollouts", N - K * M, N)
    return BucketPlan(K, M, N, assignment)


def toeplitz_stack(signals: np.ndarray) -> np.ndarray:
    """Upper block-Toeplitz matrices for a ``(N, d, T)`` stack, shape ``(N, dT, T)``.

    Block ``(r, c)`` of each matrix is the column ``s_{c-r}`` for ``c >= r``
    and zero below the block diagonal.
    """
    N, d, T = signals.shape
    out = np.zeros((N, d * T, T))
    for r in range(T):
        out[:, r * d:(r + 1) * d, r:] = signals[:, :, : T - r]
    return out


def toeplitz_input(rollout: Union[Rollout, np.ndarray]) -> np.ndarray:
    """The ``(mT, T)`` block-Toeplitz input matrix of one rollout."""
    u = rollout.inputs if isinstance(rollout, Rollout) else np.asarray(rollout, dtype=float)
    return toeplitz_stack(u[None])[0]


@dataclass(frozen=True)
class RegressionBlock:
    Y: np.ndarray  # (p, M*T)
    U: np.ndarray  # (m*T, M*T)

    def __post_init__(self):
        if self.Y.shape[1] != self.U.shape[1]:
            raise ConfigurationError(
                f"Y has {self.Y.shape[1]} columns but U has {self.U.shape[1]}"
            )


def regression_block(rollouts) -> RegressionBlock:
    """Stack outputs and Toeplitz inputs of a bucket side by side."""
    data = rollouts if isinstance(rollouts, Dataset) else Dataset.from_rollouts(rollouts)
    U = toeplitz_stack(data.inputs)
    return RegressionBlock(np.hstack(list(data.outputs)), np.hstack(list(U)))


def _solve_normal(gram, cross, rank_tol, on_deficient, bucket=None):
    eig = np.linalg.eigvalsh(gram)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    deficient = not (lam_max > 0 and lam_min > rank_tol * lam_max)
    if deficient:
        if on_deficient == "raise":
            raise ExcitationDeficiencyError(lam_min, lam_max, bucket)
        return cross @ np.linalg.pinv(gram, rcond=rank_tol, hermitian=True), lam_min, True
    return np.linalg.solve(gram, cross.T).T, lam_min, False


def ols_bucket(block: RegressionBlock, rank_tol=RANK_TOL, on_deficient="raise") -> np.ndarray:
    """Least-squares Markov estimate ``Y U^T (U U^T)^-1`` of one bucket.

    ``on_deficient="pinv"`` returns the minimum-norm solution ``Y U^+`` instead
    of raising when ``lambda_min(U U^T) <= rank_tol * lambda_max``.

    Raises:
        ExcitationDeficiencyError: the Gram matrix is numerically singular
            and ``on_deficient == "raise"``.
    """
    _check_mode(on_deficient)
    g, _, _ = _solve_normal(block.U @ block.U.T, block.Y @ block.U.T, rank_tol, on_deficient)
    return g


def _check_mode(on_deficient):
    if on_deficient not in DEFICIENT_MODES:
        raise ConfigurationError(
            f"on_deficient must be one of {DEFICIENT_MODES}, got {on_deficient!r}"
        )


def _as_dataset(dataset) -> Dataset:
    if isinstance(dataset, Dataset):
        return dataset
    return Dataset.from_rollouts(dataset)


@dataclass
class BucketFits:
    estimates: np.ndarray  # (K, p, mT)
    lambda_min: np.ndarray  # (K,)
    deficient: List[int]


def bucket_estimates(dataset, buckets: Sequence[np.ndarray], rank_tol=RANK_TOL,
                     on_deficient="raise") -> BucketFits:
    """OLS estimate for each bucket given as an array of rollout indices."""
    _check_mode(on_deficient)
    data = _as_dataset(dataset)
    U = toeplitz_stack(data.inputs)
    fits, lams, bad = [], [], []
    for j, idx in enumerate(buckets):
        Uj, Yj = U[idx], data.outputs[idx]
        gram = np.einsum("iat,ibt->ab", Uj, Uj)
        cross = np.einsum("ipt,ibt->pb", Yj, Uj)
        g, lam, deficient = _solve_normal(gram, cross, rank_tol, on_deficient, bucket=j)
        fits.append(g)
        lams.append(lam)
        if deficient:
            bad.append(j)
    if bad:
        logger.debug("%d of %d buckets are excitation deficient", len(bad), len(buckets))
    return BucketFits(np.stack(fits), np.array(lams), bad)


@dataclass
class BoostedEstimate:
    g_hat: np.ndarray
    per_bucket: List[np.ndarray]
    plan: BucketPlan
    median_iterations: int
    median_residual: float
    lambda_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    deficient_buckets: List[int] = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "K": self.plan.K,
            "M": self.plan.M,
            "N": self.plan.N,
            "discarded": self.plan.discarded,
            "median_iterations": self.median_iterations,
            "median_residual": self.median_residual,
            "min_bucket_lambda_min": float(np.min(self.lambda_min)),
            "deficient_buckets": len(self.deficient_buckets),
        }


def min_rollouts_per_bucket(m: int, T: int, kurtosis: float, q: float = BOOSTING_Q,
                            c: float = EXCITATION_CONSTANT) -> int:
    """Bucket size ``ceil(c (mT)^2 kurtosis / q)`` sufficient for excitation."""
    return math.ceil(c * (m * T) ** 2 * kurtosis / q - 1e-9)


def boost(estimates, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Geometric median of per-bucket estimates; returns the solver result."""
    return weiszfeld(list(estimates), tol, max_iter)


def estimate(
    dataset,
    delta: float,
    *,
    strict: bool = False,
    input_kurtosis: Optional[float] = None,
    q: float = BOOSTING_Q,
    rank_tol: float = RANK_TOL,
    on_deficient: str = "raise",
    shuffle_seed=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BoostedEstimate:
    """Boosted Markov-parameter estimate from a list of rollouts.

    In strict mode the bucket size must reach :func:`min_rollouts_per_bucket`
    for the given input kurtosis; otherwise a shortfall is only logged.
    """
    data = _as_dataset(dataset)
    plan = plan_buckets(data.N, delta, shuffle_seed)
    if strict or input_kurtosis is not None:
        if input_kurtosis is None:
            raise ConfigurationError("strict mode needs the input kurtosis ratio")
        need = min_rollouts_per_bucket(data.m, data.T, input_kurtosis, q)
        if plan.M < need:
            msg = f"M={plan.M} rollouts per bucket is below the excitation threshold {need}"
            if strict:
                raise InsufficientRolloutsError(plan.N, need * plan.K)
            logger.warning(msg)
    fits = bucket_estimates(data, plan.buckets, rank_tol, on_deficient)
    med = boost(fits.estimates, tol, max_iter)
    return BoostedEstimate(
        g_hat=med.median,
        per_bucket=list(fits.estimates),
        plan=plan,
        median_iterations=med.iterations,
        median_residual=med.residual,
        lambda_min=fits.lambda_min,
        deficient_buckets=fits.deficient,
    )


def single_ols(dataset, rank_tol=RANK_TOL, on_deficient="raise") -> np.ndarray:
    """Plain OLS over all rollouts (one bucket, no boosting)."""
    data = _as_dataset(dataset)
    return bucket_estimates(data, [np.arange(data.N)], rank_tol, on_deficient).estimates[0]


def theorem1_bound(dims, T, sigma_w, sigma_v, sigma_u, f_norm, delta, N, c1=1.0, c2=1.0) -> float:
    """High-probability bound on the spectral error of the boosted estimate.

    ``(sigma_v C1 + sigma_w C2) / sigma_u * sqrt(p ln(1/delta) / N)`` with
    ``C1 = c1 T^1.5 sqrt(pm)`` and ``C2 = c2 ||F|| T^2.5 sqrt(nm)``.
    """
    n, m, p = dims
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    C1 = c1 * T**1.5 * math.sqrt(p * m)
    C2 = c2 * f_norm * T**2.5 * math.sqrt(n * m)
    return (sigma_v * C1 + sigma_w * C2) / sigma_u * math.sqrt(p * math.log(1.0 / delta) / N)


@dataclass
class LemmaDiagnostics:
    lambda_min: float
    lambda_bound: float
    process_lhs: float
    process_rhs: float
    measurement_lhs: float
    measurement_rhs: float

    @property
    def excitation_ok(self) -> bool:
        return self.lambda_min >= self.lambda_bound

    @property
    def process_ok(self) -> bool:
        return self.process_lhs <= self.process_rhs

    @property
    def measurement_ok(self) -> bool:
        return self.measurement_lhs <= self.measurement_rhs

    def as_record(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "lambda_bound": self.lambda_bound,
            "excitation_ok": self.excitation_ok,
            "process_lhs": self.process_lhs,
            "process_rhs": self.process_rhs,
            "process_ok": self.process_ok,
            "measurement_lhs": self.measurement_lhs,
            "measurement_rhs": self.measurement_rhs,
            "measurement_ok": self.measurement_ok,
        }


def lemma_diagnostics(bucket: Dataset, sigma_u, sigma_w, sigma_v, q=BOOSTING_Q) -> LemmaDiagnostics:
    """Check the three per-bucket inequalities on white-box data.

    * ``lambda_min(U U^T) >= M sigma_u^2 / 2``
    * ``||W U^T||_F^2 <= 3/q T^5 sigma_u^2 sigma_w^2 M n m``
    * ``||V U^T||_F^2 <= 3/q T^3 sigma_v^2 sigma_u^2 M p m``

    ``W`` stacks the block-Toeplitz matrices of the process noise and ``V``
    the raw measurement-noise sequences, matching how they enter the outputs.
    """
    if not isinstance(bucket, Dataset) or not bucket.white_box:
        raise ConfigurationError("lemma diagnostics need a white-box dataset with noise records")
    if not 0.0 < q < 1.0:
        raise ConfigurationError(f"q must lie in (0, 1), got {q}")
    M, m, T = bucket.inputs.shape
    n, p = bucket.process_noise.shape[1], bucket.measurement_noise.shape[1]
    U = toeplitz_stack(bucket.inputs)
    W = toeplitz_stack(bucket.process_noise)
    gram = np.einsum("iat,ibt->ab", U, U)
    WU = np.einsum("iat,ibt->ab", W, U)
    VU = np.einsum("ipt,ibt->pb", bucket.measurement_noise, U)
    su2, sw2, sv2 = sigma_u**2, sigma_w**2, sigma_v**2
    return LemmaDiagnostics(
        lambda_min=float(np.linalg.eigvalsh(gram)[0]),
        lambda_bound=M * su2 / 2.0,
        process_lhs=float(np.sum(WU**2)),
        process_rhs=3.0 / q * T**5 * su2 * sw2 * M * n * m,
        measurement_lhs=float(np.sum(VU**2)),
        measurement_rhs=3.0 / q * T**3 * sv2 * su2 * M * p * m,
    )
