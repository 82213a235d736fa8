"""RBF kernel k(x, y) = exp(-||x - y||^2 / h) and bandwidth rules."""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .core import InvalidArgumentError, ParticleEnsemble

LOG_FLOOR = 1e-8
FALLBACK_BANDWIDTH = 1.0


def _check_h(h: float) -> None:
    if not h > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {h}")


def _pair(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise InvalidArgumentError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def rbf_eval(x, y, h: float) -> float:
    _check_h(h)
    x, y = _pair(x, y)
    return math.exp(-float(np.sum((x - y) ** 2)) / h)


def rbf_grad_first(x, y, h: float) -> np.ndarray:
    """Gradient of k(x, y) with respect to x."""
    _check_h(h)
    x, y = _pair(x, y)
    return -(2.0 / h) * (x - y) * rbf_eval(x, y, h)


def rbf_mixed_trace(x, y, h: float) -> float:
    """trace of the mixed Hessian d^2 k / dx dy."""
    _check_h(h)
    x, y = _pair(x, y)
    sq = float(np.sum((x - y) ** 2))
    return math.exp(-sq / h) * (2.0 * x.size / h - 4.0 * sq / h**2)


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    """n x n squared distances with an exactly zero diagonal."""
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@lru_cache(maxsize=16)
def _upper_mask(n: int) -> np.ndarray:
    mask = np.triu(np.ones((n, n), dtype=bool), 1)
    mask.flags.writeable = False
    return mask


def _upper(sq: np.ndarray) -> np.ndarray:
    return sq[_upper_mask(sq.shape[0])]


def median_from_sq(sq: np.ndarray) -> float:
    """Median pairwise distance from an n x n squared-distance matrix."""
    vals = _upper(sq)
    m = vals.size
    if m == 0:
        return 0.0
    mid = m // 2
    if m % 2:
        return math.sqrt(float(np.partition(vals, mid)[mid]))
    part = np.partition(vals, (mid - 1, mid))
    return 0.5 * (math.sqrt(float(part[mid - 1])) + math.sqrt(float(part[mid])))


def bandwidth_from_median(med: float, n: int) -> float:
    if n < 2 or med == 0.0:
        return FALLBACK_BANDWIDTH
    return med**2 / max(math.log(n), LOG_FLOOR)


def median_bandwidth(ensemble) -> float:
    """h = med^2 / log n, med being the median pairwise Euclidean distance.

    Falls back to h = 1 when n = 1 or all particles coincide.
    """
    X = ensemble.data if isinstance(ensemble, ParticleEnsemble) else np.atleast_2d(ensemble)
    return bandwidth_from_median(median_from_sq(pairwise_sq_dists(X)), X.shape[0])


def mean_distance_bandwidth(ensemble) -> float:
    """Alternative rule h = mean squared pairwise distance / log(n + 1)."""
    X = ensemble.data if isinstance(ensemble, ParticleEnsemble) else np.atleast_2d(ensemble)
    n = X.shape[0]
    if n < 2:
        return FALLBACK_BANDWIDTH
    mean_sq = float(np.mean(pdist(X, "sqeuclidean")))
    if mean_sq == 0.0:
        return FALLBACK_BANDWIDTH
    return mean_sq / math.log(n + 1)


@dataclass(frozen=True)
class RbfKernel:
    h: float

    def __post_init__(self):
        _check_h(self.h)

    def __call__(self, x, y) -> float:
        return rbf_eval(x, y, self.h)

    def grad_first(self, x, y) -> np.ndarray:
        return rbf_grad_first(x, y, self.h)

    def mixed_trace(self, x, y) -> float:
        return rbf_mixed_trace(x, y, self.h)

    def gram(self, X: np.ndarray, sq: Optional[np.ndarray] = None) -> np.ndarray:
        if sq is None:
            sq = pairwise_sq_dists(X)
        return np.exp(-sq / self.h)


@dataclass(frozen=True)
class BandwidthPolicy:
    """How the bandwidth is chosen during a run.

    ``kind`` is one of ``fixed``, ``median`` (computed once from the initial
    ensemble), ``median-adaptive`` (recomputed every iteration) and
    ``mean-adaptive`` (mean-distance rule, recomputed every iteration).
    """

    kind: str = "median-adaptive"
    h: Optional[float] = None

    KINDS = ("fixed", "median", "median-adaptive", "mean-adaptive")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"unknown bandwidth policy {self.kind!r}")
        if self.kind == "fixed":
            if self.h is None:
                raise InvalidArgumentError("fixed bandwidth policy needs h")
            _check_h(self.h)

    @classmethod
    def fixed(cls, h: float) -> "BandwidthPolicy":
        return cls("fixed", h)

    @classmethod
    def parse(cls, text: str) -> "BandwidthPolicy":
        text = text.strip()
        if text in cls.KINDS:
            return cls(text)
        try:
            return cls.fixed(float(text))
        except ValueError:
            raise InvalidArgumentError(f"bad bandwidth policy {text!r}") from None

    def bandwidth(self, ensemble, initial_h: Optional[float] = None,
                  sq: Optional[np.ndarray] = None) -> float:
        """Bandwidth for the current ensemble; ``sq`` may carry its precomputed
        squared-distance matrix."""
        if self.kind == "fixed":
            return float(self.h)
        if self.kind == "median":
            return initial_h if initial_h is not None else median_bandwidth(ensemble)
        if self.kind == "median-adaptive":
            if sq is not None:
                return bandwidth_from_median(median_from_sq(sq), sq.shape[0])
            return median_bandwidth(ensemble)
        if sq is not None:
            n = sq.shape[0]
            mean_sq = float(np.mean(_upper(sq))) if n > 1 else 0.0
            return mean_sq / math.log(n + 1) if mean_sq > 0 else FALLBACK_BANDWIDTH
        return mean_distance_bandwidth(ensemble)

    def __str__(self) -> str:
        return f"fixed:{self.h!r}" if self.kind == "fixed" else self.kind
