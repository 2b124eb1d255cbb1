"""Ho-Kalman realization of (A, B, C, D) from Markov parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, OrderTooHighError
from .lti import LtiSystem, markov_blocks, true_markov

RANK_TOL = 1e-8


@dataclass
class RealizationResult:
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_hat: np.ndarray
    hankel_singular_values: np.ndarray

    @property
    def system(self) -> LtiSystem:
        return LtiSystem(self.A_hat, self.B_hat, self.C_hat, self.D_hat)

    def markov(self, T: int) -> np.ndarray:
        return true_markov(self.system, T)


def hankel(blocks: np.ndarray, rows: int, cols: int, offset: int = 1) -> np.ndarray:
    """Block Hankel matrix with block ``(i, j)`` equal to ``blocks[i + j + offset]``."""
    _, p, m = blocks.shape
    H = np.empty((rows * p, cols * m))
    for i in range(rows):
        for j in range(cols):
            H[i * p:(i + 1) * p, j * m:(j + 1) * m] = blocks[i + j + offset]
    return H


def default_split(T: int):
    half = (T - 1) // 2
    return half, half


def ho_kalman(g: np.ndarray, order: int, m: int, T1: Optional[int] = None,
              T2: Optional[int] = None, rank_tol: float = RANK_TOL) -> RealizationResult:
    """Balanced Ho-Kalman realization of order ``order``.

    ``g`` is the ``p x mT`` Markov matrix. The Hankel matrix built from
    blocks ``1 .. T1+T2-1`` is truncated to rank ``order`` by SVD and split
    into observability and controllability factors ``U S^1/2`` and
    ``S^1/2 V^T``; ``A`` is read off the one-step shifted Hankel matrix.

    Raises:
        ConfigurationError: inconsistent sizes or an order larger than the
            Hankel matrix allows.
        OrderTooHighError: a retained singular value is below
            ``rank_tol`` times the largest one.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    blocks = markov_blocks(g, m)
    T, p, _ = blocks.shape
    if T1 is None or T2 is None:
        d1, d2 = default_split(T)
        T1 = d1 if T1 is None else T1
        T2 = d2 if T2 is None else T2
    if T1 < 1 or T2 < 1 or T1 + T2 + 1 > T:
        raise ConfigurationError(f"split T1={T1}, T2={T2} needs T1+T2+1 <= T={T}")
    if not 1 <= order <= min(p * T1, m * T2):
        raise ConfigurationError(
            f"order {order} exceeds the Hankel capacity min(p*T1, m*T2)={min(p * T1, m * T2)}"
        )

    H = hankel(blocks, T1, T2, offset=1)
    H_shift = hankel(blocks, T1, T2, offset=2)
    U, s, Vt = np.linalg.svd(H)
    if s[0] == 0.0 or s[order - 1] < rank_tol * s[0]:
        raise OrderTooHighError(order, s)

    root = np.sqrt(s[:order])
    O = U[:, :order] * root
    Q = root[:, None] * Vt[:order]
    A_hat = np.linalg.pinv(O) @ H_shift @ np.linalg.pinv(Q)
    return RealizationResult(
        A_hat=A_hat,
        B_hat=Q[:, :m].copy(),
        C_hat=O[:p].copy(),
        D_hat=blocks[0].copy(),
        hankel_singular_values=s,
    )


def hausdorff(a, b) -> float:
    """Hausdorff distance between two finite sets of complex numbers."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def realization_error(truth: LtiSystem, est: RealizationResult, T: int) -> dict:
    """Similarity-invariant errors: Markov spectral distance and eigenvalue Hausdorff distance."""
    if est.B_hat.shape[1] != truth.m or est.C_hat.shape[0] != truth.p:
        raise ConfigurationError("estimated system has different input/output dimensions")
    markov_err = float(np.linalg.norm(true_markov(truth, T) - est.markov(T), 2))
    eig_err = hausdorff(np.linalg.eigvals(truth.A), np.linalg.eigvals(est.A_hat))
    return {"markov_err": markov_err, "eig_err": eig_err}
