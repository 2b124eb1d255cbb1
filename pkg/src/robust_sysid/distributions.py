"""Zero-mean samplers with exactly known second and fourth moments.

Every family is parameterised by its per-coordinate standard deviation
``scale``, so that the noise and input levels entering the error bounds are
ground truth rather than estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError

KINDS = ("gaussian", "student_t", "three_point")

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


@dataclass(frozen=True)
class DistributionSpec:
    """A zero-mean i.i.d. coordinate distribution.

    ``param`` is the degrees of freedom for ``student_t`` and the mass on
    each of the two non-zero atoms for ``three_point``; it is ignored for
    ``gaussian``.
    """

    kind: str
    scale: float = 1.0
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ConfigurationError(f"scale must be > 0, got {self.scale}")
        if self.kind == "student_t":
            if self.param is None or not self.param > 2:
                raise ConfigurationError(
                    f"student_t needs degrees of freedom nu > 2, got {self.param}"
                )
        elif self.kind == "three_point":
            if self.param is None or not (0 < self.param <= 0.5):
                raise ConfigurationError(
                    f"three_point needs p in (0, 0.5], got {self.param}"
                )

    @classmethod
    def gaussian(cls, scale=1.0):
        return cls("gaussian", scale)

    @classmethod
    def student_t(cls, nu, scale=1.0):
        return cls("student_t", scale, float(nu))

    @classmethod
    def three_point(cls, p, scale=1.0):
        return cls("three_point", scale, float(p))

    @classmethod
    def parse(cls, text: str, scale: float = 1.0) -> "DistributionSpec":
        """Build a spec from ``kind`` or ``kind:param`` (e.g. ``student_t:2.5``)."""
        kind, _, param = text.strip().partition(":")
        kind = kind.strip()
        if kind == "gaussian":
            if param.strip():
                raise ConfigurationError("gaussian takes no parameter")
            return cls(kind, scale)
        if not param.strip():
            raise ConfigurationError(f"{kind!r} requires a parameter, e.g. {kind}:<value>")
        try:
            value = float(param)
        except ValueError:
            raise ConfigurationError(f"bad distribution parameter {param!r}") from None
        return cls(kind, scale, value)

    def to_text(self) -> str:
        if self.kind == "gaussian":
            return "gaussian"
        return f"{self.kind}:{self.param!r}"

    @property
    def variance(self) -> float:
        return self.scale**2

    @property
    def fourth_moment(self) -> Optional[float]:
        """Per-coordinate E[x^4], or None when it is infinite."""
        s4 = self.scale**4
        if self.kind == "gaussian":
            return 3.0 * s4
        if self.kind == "student_t":
            nu = self.param
            if nu <= 4:
                return None
            # raw t: E[t^4] = 3 nu^2 / ((nu-2)(nu-4)); rescaled by (nu-2)/nu per variance
            return 3.0 * s4 * (nu - 2.0) / (nu - 4.0)
        return s4 / (2.0 * self.param)

    @property
    def atom(self) -> float:
        """Magnitude of the non-zero atoms of ``three_point``."""
        if self.kind != "three_point":
            raise AttributeError("atom is defined for three_point only")
        return self.scale / math.sqrt(2.0 * self.param)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(size)
        if self.kind == "student_t":
            nu = self.param
            return self.scale * math.sqrt((nu - 2.0) / nu) * rng.standard_t(nu, size)
        r = rng.random(size)
        a = self.atom
        out = np.zeros(np.shape(r))
        out[r < self.param] = -a
        out[(r >= self.param) & (r < 2.0 * self.param)] = a
        return out


def as_rng(seed: Union[SeedLike, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed for the stream identified by ``key`` under ``master_seed``.

    Distinct keys give statistically independent streams; the mapping is a
    pure function so trials can be generated in any order or process.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def sample_vector(spec: DistributionSpec, dim: int, rng_state) -> np.ndarray:
    """Draw ``dim`` i.i.d. coordinates of ``spec``."""
    if int(dim) != dim or dim < 1:
        raise ConfigurationError(f"dim must be a positive integer, got {dim}")
    return spec.sample(as_rng(rng_state), int(dim))


def kurtosis_ratio(spec: DistributionSpec) -> Optional[float]:
    """Fourth moment over squared variance, or None if the fourth moment diverges."""
    m4 = spec.fourth_moment
    if m4 is None:
        return None
    return m4 / spec.variance**2
