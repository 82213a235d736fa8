"""Shared data types, errors and seeded randomness."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InvalidArgumentError(ValueError):
    pass


class UnsupportedCapabilityError(NotImplementedError):
    pass


class NumericalFailureError(ArithmeticError):
    pass


class NonFiniteScoreError(FloatingPointError):
    """Raised when a target returns NaN/Inf for some particle."""

    def __init__(self, particle: int, iteration: Optional[int] = None):
        self.particle = particle
        self.iteration = iteration
        where = f"particle {particle}"
        if iteration is not None:
            where += f" at iteration {iteration}"
        super().__init__(f"non-finite score for {where}")


class RngStream:
    """Seeded random stream backed by numpy's Philox counter-based generator.

    The key is derived from ``(seed, stream)`` through ``SeedSequence`` so
    that distinct stream ids give statistically independent sequences.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise InvalidArgumentError("seed and stream id must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidArgumentError(f"expected RngStream or Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class ParticleEnsemble:
    """An immutable n x d snapshot of particle positions."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidArgumentError(f"particles must be a non-empty n x d array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("particles contain non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def copy(self) -> np.ndarray:
        """Writable copy of the particle matrix."""
        return self.data.copy()

    def permuted(self, order: Sequence[int]) -> "ParticleEnsemble":
        return ParticleEnsemble(self.data[np.asarray(order)])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"ParticleEnsemble(n={self.n}, d={self.d})"


def ensemble_from_gaussian(n: int, d: int, mean, stddev: float, rng: RngStream) -> ParticleEnsemble:
    """Draw n i.i.d. particles from N(mean, stddev^2 I)."""
    if n < 1 or d < 1:
        raise InvalidArgumentError("n and d must be positive")
    if not stddev > 0:
        raise InvalidArgumentError("stddev must be positive")
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (d,))
    z = as_generator(rng).standard_normal((n, d))
    return ParticleEnsemble(mean + stddev * z)


class TargetDensity:
    """Base class for targets known through their score grad log p(x).

    Subclasses implement :meth:`score` on an n x d array. Optional
    capabilities (unnormalized log density, exact sampling, minibatch
    gradients) are advertised through class flags.
    """

    dim: int
    stochastic: bool = False
    has_log_density: bool = False
    has_sampler: bool = False

    def score(self, X: np.ndarray, batch: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def grad_log_density(self, x, batch: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(1, self.dim)
        return self.score(x, batch)[0]

    def log_unnorm_density(self, X: np.ndarray) -> np.ndarray:
        raise UnsupportedCapabilityError(f"{type(self).__name__} has no log density")

    def sample(self, m: int, rng) -> np.ndarray:
        raise UnsupportedCapabilityError(f"{type(self).__name__} has no exact sampler")

    def batch_sampler(self, rng):
        """Minibatch index source for stochastic targets; None otherwise."""
        return None
