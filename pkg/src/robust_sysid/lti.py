"""Ground-truth LTI systems, multi-rollout simulation and Markov parameters.

Trajectories follow

    x_{t+1} = A x_t + B u_t + w_t
    y_t     = C x_t + D u_t + v_t,        x_0 = 0,

and every array is stored channel-major: ``(channels, T)`` for one rollout,
``(N, channels, T)`` for a dataset.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import DistributionSpec, stream_seed
from .errors import ConfigurationError

DEFAULT_SYSTEM_SEED = 20240601
DEFAULT_SPECTRAL_RADIUS = 0.8

# stream offsets inside one (master_seed, trial) key
_U_STREAM, _W_STREAM, _V_STREAM = 0, 1, 2


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            arr = np.array(getattr(self, name), dtype=float, ndmin=2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m, p = self.B.shape[0], self.B.shape[1], self.C.shape[0]
        if self.A.shape != (n, n):
            raise ConfigurationError(f"A must be {n}x{n}, got {self.A.shape}")
        if self.C.shape != (p, n):
            raise ConfigurationError(f"C must be {p}x{n}, got {self.C.shape}")
        if self.D.shape != (p, m):
            raise ConfigurationError(f"D must be {p}x{m}, got {self.D.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def similar(self, S: np.ndarray) -> "LtiSystem":
        """The system in the state basis x -> S x."""
        S_inv = np.linalg.inv(S)
        return LtiSystem(S @ self.A @ S_inv, S @ self.B, self.C @ S_inv, self.D)


@dataclass(frozen=True, eq=False)
class Rollout:
    """One trajectory started from the zero state."""

    inputs: np.ndarray  # (m, T)
    outputs: np.ndarray  # (p, T)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise ConfigurationError("rollout inputs and outputs must be 2-D")
        if self.inputs.shape[1] != self.outputs.shape[1]:
            raise ConfigurationError(
                f"inputs have {self.inputs.shape[1]} columns, outputs {self.outputs.shape[1]}"
            )

    @property
    def T(self) -> int:
        return self.inputs.shape[1]


class Dataset(Sequence):
    """``N`` rollouts held as stacked arrays; indexing yields :class:`Rollout`.

    ``process_noise`` and ``measurement_noise`` are the realised w and v
    sequences, present only when the dataset was simulated in white-box mode.
    ``n`` is the state dimension of the generating system when known.
    """

    def __init__(self, inputs, outputs, process_noise=None, measurement_noise=None, n=None):
        inputs = np.asarray(inputs, dtype=float)
        outputs = np.asarray(outputs, dtype=float)
        if inputs.ndim != 3 or outputs.ndim != 3:
            raise ConfigurationError("dataset arrays must have shape (N, channels, T)")
        if inputs.shape[0] != outputs.shape[0] or inputs.shape[2] != outputs.shape[2]:
            raise ConfigurationError(
                f"inconsistent dataset shapes {inputs.shape} and {outputs.shape}"
            )
        self.inputs = inputs
        self.outputs = outputs
        self.process_noise = process_noise
        self.measurement_noise = measurement_noise
        if n is None and process_noise is not None:
            n = process_noise.shape[1]
        self.n = n

    @classmethod
    def from_rollouts(cls, rollouts) -> "Dataset":
        rollouts = list(rollouts)
        if not rollouts:
            raise ConfigurationError("empty rollout list")
        return cls(
            np.stack([r.inputs for r in rollouts]), np.stack([r.outputs for r in rollouts])
        )

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]

    @property
    def T(self) -> int:
        return self.inputs.shape[2]

    @property
    def white_box(self) -> bool:
        return self.process_noise is not None and self.measurement_noise is not None

    def __len__(self):
        return self.N

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Dataset(
                self.inputs[idx],
                self.outputs[idx],
                None if self.process_noise is None else self.process_noise[idx],
                None if self.measurement_noise is None else self.measurement_noise[idx],
                self.n,
            )
        return Rollout(self.inputs[idx], self.outputs[idx])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.inputs[idx],
            self.outputs[idx],
            None if self.process_noise is None else self.process_noise[idx],
            None if self.measurement_noise is None else self.measurement_noise[idx],
            self.n,
        )


def default_system(n=3, m=2, p=2, seed=DEFAULT_SYSTEM_SEED, radius=DEFAULT_SPECTRAL_RADIUS):
    """Random truth system with ``A`` rescaled to spectral radius ``radius``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= radius / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m))
    return LtiSystem(A, B, C, D)


def true_markov(sys: LtiSystem, T: int) -> np.ndarray:
    """``[D, CB, CAB, ..., C A^{T-2} B]`` as a ``p x mT`` matrix."""
    _check_horizon(T)
    blocks = [sys.D]
    CA = sys.C
    for _ in range(T - 1):
        blocks.append(CA @ sys.B)
        CA = CA @ sys.A
    return np.hstack(blocks)


def f_matrix(sys: LtiSystem, T: int) -> np.ndarray:
    """``[0, C, CA, ..., C A^{T-2}]``, the ``p x nT`` map from stacked process noise to outputs."""
    _check_horizon(T)
    blocks = [np.zeros((sys.p, sys.n))]
    CA = sys.C
    for _ in range(T - 1):
        blocks.append(CA)
        CA = CA @ sys.A
    return np.hstack(blocks)


def f_matrix_norm(sys: LtiSystem, T: int) -> float:
    return float(np.linalg.norm(f_matrix(sys, T), 2))


def markov_blocks(g: np.ndarray, m: int) -> np.ndarray:
    """Split a ``p x mT`` Markov matrix into a ``(T, p, m)`` block array."""
    p, cols = g.shape
    if cols % m:
        raise ConfigurationError(f"{cols} columns is not a multiple of m={m}")
    return g.reshape(p, cols // m, m).transpose(1, 0, 2)


def _check_horizon(T):
    if int(T) != T or T < 1:
        raise ConfigurationError(f"horizon T must be a positive integer, got {T}")


def _draw(spec: DistributionSpec, seed: np.random.SeedSequence, N, dim, T):
    # (N, T, dim) fill order makes rollout i a prefix-stable slice of the stream
    rng = np.random.default_rng(seed)
    return np.ascontiguousarray(spec.sample(rng, (N, T, dim)).transpose(0, 2, 1))


def _child(seed: np.random.SeedSequence, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (k,))


def _propagate(sys: LtiSystem, u, w, v):
    N, _, T = u.shape
    x = np.zeros((N, sys.n))
    y = np.empty((N, sys.p, T))
    At, Bt, Ct, Dt = sys.A.T, sys.B.T, sys.C.T, sys.D.T
    for t in range(T):
        y[:, :, t] = x @ Ct + u[:, :, t] @ Dt
        if v is not None:
            y[:, :, t] += v[:, :, t]
        x = x @ At + u[:, :, t] @ Bt
        if w is not None:
            x += w[:, :, t]
    return y


def _simulate(sys, N, T, u_spec, w_spec, v_spec, seed, noiseless, inputs, record_noise):
    _check_horizon(T)
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if inputs is not None:
        u = np.asarray(inputs, dtype=float).reshape(N, sys.m, T)
    else:
        if u_spec is None:
            raise ConfigurationError("an input distribution or explicit inputs are required")
        u = _draw(u_spec, _child(seed, _U_STREAM), N, sys.m, T)
    if noiseless:
        w = v = None
    else:
        if w_spec is None or v_spec is None:
            raise ConfigurationError("noise distributions are required unless noiseless=True")
        w = _draw(w_spec, _child(seed, _W_STREAM), N, sys.n, T)
        v = _draw(v_spec, _child(seed, _V_STREAM), N, sys.p, T)
    y = _propagate(sys, u, w, v)
    if record_noise:
        w_rec = np.zeros((N, sys.n, T)) if w is None else w
        v_rec = np.zeros((N, sys.p, T)) if v is None else v
        return Dataset(u, y, w_rec, v_rec, n=sys.n)
    return Dataset(u, y, n=sys.n)


def simulate_rollout(
    sys: LtiSystem,
    T: int,
    u_spec: Optional[DistributionSpec],
    w_spec: Optional[DistributionSpec],
    v_spec: Optional[DistributionSpec],
    rng_state,
    *,
    noiseless: bool = False,
    inputs: Optional[np.ndarray] = None,
) -> Rollout:
    """Simulate one rollout from ``x_0 = 0``.

    ``rng_state`` is an int or :class:`numpy.random.SeedSequence`; the input,
    process-noise and measurement-noise streams are derived from it as three
    independent children. ``inputs`` (shape ``(m, T)``) overrides the input
    draw; ``noiseless`` zeroes w and v.
    """
    seed = rng_state if isinstance(rng_state, np.random.SeedSequence) else np.random.SeedSequence(rng_state)
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != (sys.m, T):
            raise ConfigurationError(f"inputs must have shape {(sys.m, T)}, got {inputs.shape}")
    data = _simulate(sys, 1, T, u_spec, w_spec, v_spec, seed, noiseless, inputs, False)
    return data[0]


def simulate_dataset(
    sys: LtiSystem,
    N: int,
    T: int,
    u_spec: Optional[DistributionSpec],
    w_spec: Optional[DistributionSpec],
    v_spec: Optional[DistributionSpec],
    master_seed: int,
    *,
    trial=0,
    noiseless: bool = False,
    record_noise: bool = False,
) -> Dataset:
    """Simulate ``N`` independent rollouts keyed by ``(master_seed, trial)``.

    Rollout ``i`` consumes the ``i``-th consecutive chunk of each stream, so
    ``N = 1`` reproduces :func:`simulate_rollout` seeded with
    ``stream_seed(master_seed, trial)`` and shorter datasets are prefixes of
    longer ones. ``trial`` may be a tuple of ints to key nested experiments.
    ``record_noise`` keeps the realised w and v (white-box mode).
    """
    key = tuple(trial) if isinstance(trial, (tuple, list)) else (trial,)
    seed = stream_seed(master_seed, *key)
    return _simulate(sys, N, T, u_spec, w_spec, v_spec, seed, noiseless, None, record_noise)
