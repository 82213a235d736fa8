"""Expectation estimates, MSE, 1D kernel density estimates and
classification metrics."""
from __future__ import annotations

import math
from typing import Dict, Sequence, Union

import numpy as np

from .core import InvalidArgumentError, ParticleEnsemble
from .targets import TestFunction

PROB_CLIP = 1e-12


def _values(ensemble) -> np.ndarray:
    X = ensemble.data if isinstance(ensemble, ParticleEnsemble) else np.asarray(ensemble, dtype=np.float64)
    return X.reshape(X.shape[0], -1) if X.ndim > 1 else X[:, None]


def estimate_expectation(ensemble, h: TestFunction) -> float:
    """(1/n) sum_i h(x_i); vector particles use h coordinate-wise then sum."""
    if not isinstance(h, TestFunction):
        raise InvalidArgumentError(f"unsupported test function {h!r}")
    X = _values(ensemble)
    if h.kind == "cos" and X.shape[1] != 1:
        raise InvalidArgumentError("cos test function needs 1D particles")
    return float(np.mean(np.sum(h(X), axis=1)))


def mse_over_trials(estimates: Sequence[float], truth: float) -> float:
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise InvalidArgumentError("need at least one trial")
    return float(np.mean((est - truth) ** 2))


def silverman_bandwidth(x: np.ndarray) -> float:
    """1.06 * sigma * n^(-1/5); falls back to 1 for a single or degenerate sample."""
    x = np.ravel(x)
    if x.size < 2:
        return 1.0
    sigma = float(np.std(x, ddof=1))
    return 1.06 * sigma * x.size ** -0.2 if sigma > 0 else 1.0


def kde_1d(ensemble, grid, bandwidth: Union[str, float] = "silverman") -> np.ndarray:
    X = _values(ensemble)
    if X.shape[1] != 1:
        raise InvalidArgumentError("kde_1d needs 1D particles")
    x = X[:, 0]
    if bandwidth == "silverman":
        bw = silverman_bandwidth(x)
    elif isinstance(bandwidth, str):
        raise InvalidArgumentError(f"unknown bandwidth rule {bandwidth!r}")
    else:
        bw = float(bandwidth)
        if not bw > 0:
            raise InvalidArgumentError("bandwidth must be positive")
    g = np.asarray(grid, dtype=np.float64).ravel()
    z = (g[:, None] - x[None, :]) / bw
    return np.exp(-0.5 * z**2).sum(axis=1) / (x.size * bw * math.sqrt(2 * math.pi))


def classification_metrics(probs, labels) -> Dict[str, float]:
    """Accuracy (p >= 0.5 predicts +1) and mean log-likelihood of the labels."""
    p = np.clip(np.asarray(probs, dtype=np.float64).ravel(), PROB_CLIP, 1 - PROB_CLIP)
    y = np.asarray(labels).ravel()
    if p.size != y.size:
        raise InvalidArgumentError(f"{p.size} probabilities for {y.size} labels")
    pred = np.where(p >= 0.5, 1, -1)
    ll = np.where(y == 1, np.log(p), np.log1p(-p))
    return {"accuracy": float(np.mean(pred == y)), "log_likelihood": float(np.mean(ll))}
