"""Geometric median under the Frobenius norm (Weiszfeld with Vardi-Zhang steps)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import ConfigurationError, NonConvergenceError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000


@dataclass
class MedianResult:
    median: np.ndarray
    iterations: int
    residual: float
    objective_history: List[float] = field(default_factory=list)


def median_objective(theta, points) -> float:
    """Sum of Frobenius distances from ``theta`` to each point."""
    P = _flatten(points)
    return float(np.linalg.norm(P - np.ravel(theta), axis=1).sum())


def _flatten(points):
    arrs = [np.asarray(p, dtype=float) for p in points]
    if not arrs:
        raise ConfigurationError("geometric median of an empty set")
    shape = arrs[0].shape
    for a in arrs[1:]:
        if a.shape != shape:
            raise ConfigurationError(f"points have mixed shapes {shape} and {a.shape}")
    return np.stack([a.ravel() for a in arrs])


def _mean_pairwise_distance(P):
    K = len(P)
    if K < 2:
        return 0.0
    sq = np.sum(P * P, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * P @ P.T, 0.0)
    return float(np.sqrt(d2)[np.triu_indices(K, 1)].mean())


def _optimal_data_point(P, eps, slack):
    """Index of a data point satisfying the subgradient optimality test, if any.

    ``x_k`` minimises the objective iff the sum of unit vectors from ``x_k``
    to the other points has norm at most the multiplicity of ``x_k``.
    """
    diff = P[None, :, :] - P[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    far = dist > eps
    with np.errstate(invalid="ignore", divide="ignore"):
        units = np.where(far[:, :, None], diff / dist[:, :, None], 0.0)
    r = np.linalg.norm(units.sum(axis=1), axis=1)
    eta = (~far).sum(axis=1)
    ok = np.flatnonzero(r - eta <= slack)
    if ok.size == 0:
        return None
    return int(ok[np.argmin(dist[ok].sum(axis=1))])


def _newton_point(theta, units, inv_dist, R):
    """Newton iterate for the smooth objective, or None if the Hessian is singular.

    The Hessian ``s I - sum_j u_j u_j^T / d_j`` (``s = sum_j 1/d_j``) is
    inverted through a K x K Woodbury system.
    """
    s = inv_dist.sum()
    V = units * np.sqrt(inv_dist)[:, None]
    small = s * np.eye(len(V)) - V @ V.T
    try:
        x = (R + V.T @ np.linalg.solve(small, V @ R)) / s
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(x)):
        return None
    return theta + x


def _polish(theta, P, eps, r, history, steps=3):
    """A few Newton steps past the stopping point, kept while the gradient shrinks.

    The objective is flat to rounding near the optimum, so the gradient norm
    decides; steps that raise the objective beyond rounding are refused.
    """
    for _ in range(steps):
        diff = P - theta
        dist = np.linalg.norm(diff, axis=1)
        if np.any(dist <= eps):
            break
        inv = 1.0 / dist
        R = (diff * inv[:, None]).sum(axis=0)
        cand = _newton_point(theta, diff * inv[:, None], inv, R)
        if cand is None:
            break
        cdiff = P - cand
        cdist = np.linalg.norm(cdiff, axis=1)
        if np.any(cdist <= eps):
            break
        cr = float(np.linalg.norm((cdiff / cdist[:, None]).sum(axis=0)))
        value = float(cdist.sum())
        if cr >= r or value > history[-1] * (1.0 + 1e-15):
            break
        theta, r = cand, cr
        history.append(value)
    return theta, r


def weiszfeld(points, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> MedianResult:
    """Minimise ``sum_j ||theta - X_j||_F`` over ``theta``.

    Each data point is first tested for optimality and returned directly if
    it passes; otherwise the iteration starts from the entrywise mean.
    Points within ``tol`` times the mean pairwise distance of the iterate
    count as coincident; with ``eta`` coincident points the iterate is
    blended with the Weiszfeld map as in Vardi and Zhang (2000), which keeps
    the objective monotone and lets the iteration stop on a data point. The optimality residual is
    ``max(||R|| - eta, 0)``, ``R`` being the sum of unit vectors from the
    iterate to the non-coincident points; it reduces to the gradient norm
    away from data points. Convergence requires ``residual <= tol * K``.

    Weiszfeld converges slowly when the median sits close to a data point, so
    each plain step is compared with a Newton step on the smooth objective
    and the one with the lower objective is kept; the objective therefore
    never increases. After the stopping test passes away from data points, up
    to three more Newton steps are taken while they shrink the gradient.

    Raises:
        ConfigurationError: empty input, mixed shapes or ``tol <= 0``.
        NonConvergenceError: ``max_iter`` reached first.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be > 0, got {tol}")
    P = _flatten(points)
    shape = np.asarray(points[0]).shape
    K = len(P)
    scale = _mean_pairwise_distance(P)
    if K == 1 or scale == 0.0:
        return MedianResult(P[0].reshape(shape).copy(), 0, 0.0, [0.0])

    # work relative to the mean so tightly clustered points keep full precision
    center = P.mean(axis=0)
    X = P - center
    eps = tol * scale
    k = _optimal_data_point(X, eps, tol * K)
    if k is not None:
        history = [median_objective(np.zeros_like(center), X), median_objective(X[k], X)]
        return MedianResult(P[k].reshape(shape).copy(), 0, 0.0, history)
    P = X

    theta = np.zeros_like(center)
    history = []
    for it in range(max_iter + 1):
        diff = P - theta
        dist = np.linalg.norm(diff, axis=1)
        history.append(float(dist.sum()))
        far = dist > eps
        eta = K - int(far.sum())
        inv = 1.0 / dist[far]
        R = (diff[far] * inv[:, None]).sum(axis=0)
        r = float(np.linalg.norm(R))
        residual = max(r - eta, 0.0)
        if residual <= tol * K:
            if eta:
                # snap onto the data point the iterate has landed on
                theta = P[~far].mean(axis=0)
                history.append(median_objective(theta, P))
            else:
                theta, residual = _polish(theta, P, eps, r, history)
            return MedianResult((theta + center).reshape(shape), it, residual, history)
        if it == max_iter:
            break
        mapped = (P[far] * inv[:, None]).sum(axis=0) / inv.sum()
        if eta == 0:
            candidate = mapped
            newton = _newton_point(theta, diff * inv[:, None], inv, R)
            if newton is not None and (
                median_objective(newton, P) < median_objective(mapped, P)
            ):
                candidate = newton
            theta = candidate
        else:
            beta = min(1.0, eta / r)
            theta = (1.0 - beta) * mapped + beta * theta
    raise NonConvergenceError(max_iter, residual)


def geometric_median(points, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> np.ndarray:
    """Frobenius geometric median of equally shaped arrays."""
    return weiszfeld(points, tol, max_iter).median
