"""Concrete targets: diagonal Gaussian mixtures and the Bayesian logistic
regression posterior over [w, log alpha]."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .core import (
    InvalidArgumentError,
    ParticleEnsemble,
    TargetDensity,
    as_generator,
)

LOG_2PI = math.log(2.0 * math.pi)


class GaussianMixture(TargetDensity):
    """Mixture of axis-aligned Gaussians sum_i w_i N(mean_i, diag(var_i)).

    ``means`` and ``variances`` are (K, d) arrays; 1D mixtures may pass flat
    sequences of length K.
    """

    has_log_density = True
    has_sampler = True

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=np.float64).ravel()
        mu = np.asarray(means, dtype=np.float64)
        var = np.asarray(variances, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        if var.ndim == 1:
            var = np.broadcast_to(var[:, None], mu.shape).copy()
        if mu.shape != var.shape or mu.shape[0] != w.size or w.size == 0:
            raise InvalidArgumentError("weights, means and variances disagree in shape")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("weights must be positive and sum to 1")
        if np.any(var <= 0):
            raise InvalidArgumentError("variances must be positive")
        self.weights, self.means, self.variances = w, mu, var
        self.dim = mu.shape[1]
        self._log_norm = np.log(w) - 0.5 * np.sum(np.log(var) + LOG_2PI, axis=1)

    def _component_logs(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        quad = ((X[:, None, :] - self.means[None]) ** 2 / self.variances[None]).sum(-1)
        return self._log_norm[None, :] - 0.5 * quad

    def log_unnorm_density(self, X) -> np.ndarray:
        return logsumexp(self._component_logs(X), axis=1)

    log_density = log_unnorm_density

    def responsibilities(self, X) -> np.ndarray:
        logs = self._component_logs(X)
        return np.exp(logs - logsumexp(logs, axis=1, keepdims=True))

    def score(self, X, batch=None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        r = self.responsibilities(X)
        comp = -(X[:, None, :] - self.means[None]) / self.variances[None]
        return np.einsum("nk,nkd->nd", r, comp)

    def sample(self, m: int, rng) -> np.ndarray:
        g = as_generator(rng)
        labels = g.choice(self.weights.size, size=m, p=self.weights)
        z = g.standard_normal((m, self.dim))
        return self.means[labels] + np.sqrt(self.variances[labels]) * z

    def __repr__(self) -> str:
        return f"GaussianMixture(K={self.weights.size}, dim={self.dim})"


def gaussian(mean=0.0, var=1.0, dim: int = 1) -> GaussianMixture:
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (dim,))
    var = np.broadcast_to(np.asarray(var, dtype=np.float64), (dim,))
    return GaussianMixture([1.0], mean[None], var[None])


def bimodal_mixture() -> GaussianMixture:
    """(1/3) N(-2, 1) + (2/3) N(2, 1)."""
    return GaussianMixture([1.0 / 3.0, 2.0 / 3.0], [-2.0, 2.0], [1.0, 1.0])


def gmm_log_density(x, mixture: GaussianMixture):
    out = mixture.log_unnorm_density(x)
    return float(out[0]) if np.ndim(x) <= 1 and out.size == 1 else out


def gmm_grad_log_density(x, mixture: GaussianMixture) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim <= 1:
        return mixture.score(x.reshape(1, -1))[0]
    return mixture.score(x)


@dataclass(frozen=True)
class TestFunction:
    """Test function h for expectation estimates: x, x^2 or cos(omega x + b)."""

    __test__ = False

    kind: str
    omega: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("x", "x2", "cos"):
            raise InvalidArgumentError(f"unsupported test function {self.kind!r}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "x":
            return x
        if self.kind == "x2":
            return x**2
        return np.cos(self.omega * x + self.b)

    @property
    def label(self) -> str:
        return "cos" if self.kind == "cos" else self.kind


def gmm_moments(mixture: GaussianMixture, h: TestFunction) -> float:
    """Exact E_p[h(x)] for a 1D mixture."""
    if not isinstance(h, TestFunction):
        raise InvalidArgumentError(f"unsupported test function {h!r}")
    if mixture.dim != 1:
        raise InvalidArgumentError("moments are defined for 1D mixtures")
    w, mu, var = mixture.weights, mixture.means[:, 0], mixture.variances[:, 0]
    if h.kind == "x":
        return float(np.sum(w * mu))
    if h.kind == "x2":
        return float(np.sum(w * (mu**2 + var)))
    return float(np.sum(w * np.exp(-(h.omega**2) * var / 2) * np.cos(h.omega * mu + h.b)))


class MinibatchSampler:
    """Draws batches without replacement, reshuffling at each epoch.

    A partial tail that cannot fill a batch is dropped and a new epoch starts.
    """

    def __init__(self, n_data: int, batch_size: int, rng):
        if not 1 <= batch_size <= n_data:
            raise InvalidArgumentError(f"batch size must be in [1, {n_data}]")
        self.n_data, self.batch_size = n_data, batch_size
        self._gen = as_generator(rng)
        self._perm = self._gen.permutation(n_data)
        self._pos = 0
        self.epoch = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n_data:
            self._perm = self._gen.permutation(self.n_data)
            self._pos = 0
            self.epoch += 1
        out = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


class BlrPosterior(TargetDensity):
    """Posterior of Bayesian logistic regression over x = [w, beta], beta = log alpha.

    Model: y_k in {-1, +1}, p(y_k | w) = sigmoid(y_k w.x_k), w | alpha ~ N(0, I/alpha),
    alpha ~ Gamma(shape=a, rate=b). With the Jacobian of alpha = exp(beta), the
    log prior in (w, beta) is

        (d/2) beta - (e^beta / 2) ||w||^2 + a beta - b e^beta + const,

    so d/dbeta = d/2 - (alpha/2)||w||^2 + a - b alpha, where d counts every weight
    including the intercept.
    """

    def __init__(self, features, labels, a: float = 1.0, b: float = 0.01,
                 batch_size: Optional[int] = None, intercept: bool = True):
        F = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64).ravel()
        if F.ndim != 2 or F.shape[0] != y.size or y.size == 0:
            raise InvalidArgumentError("features must be N x d_f with N labels")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise InvalidArgumentError("labels must be exactly -1 or +1")
        if not (a > 0 and b > 0):
            raise InvalidArgumentError("Gamma hyperparameters must be positive")
        if intercept:
            F = self.with_intercept(F)
        self.features, self.labels = F, y
        self.a, self.b = float(a), float(b)
        self.n_data, self.n_weights = F.shape
        self.dim = self.n_weights + 1
        self.batch_size = self.n_data if batch_size is None else int(batch_size)
        if not 1 <= self.batch_size <= self.n_data:
            raise InvalidArgumentError(f"batch size must be in [1, {self.n_data}]")
        self.stochastic = self.batch_size < self.n_data

    has_log_density = True

    @staticmethod
    def with_intercept(F) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        return np.hstack([F, np.ones((F.shape[0], 1))])

    def _split(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        return X[:, : self.n_weights], X[:, self.n_weights]

    def _batch(self, batch):
        if batch is None:
            return np.arange(self.n_data)
        idx = np.asarray(batch, dtype=np.intp).ravel()
        if idx.size == 0:
            raise InvalidArgumentError("minibatch must be non-empty")
        if idx.min() < 0 or idx.max() >= self.n_data:
            raise InvalidArgumentError("minibatch index out of range")
        return idx

    def score(self, X, batch=None) -> np.ndarray:
        idx = self._batch(batch)
        W, beta = self._split(X)
        Fb, yb = self.features[idx], self.labels[idx]
        margins = yb[:, None] * (Fb @ W.T)
        coef = yb[:, None] * expit(-margins)
        alpha = np.exp(beta)
        scale = self.n_data / idx.size
        gw = scale * (coef.T @ Fb) - alpha[:, None] * W
        gb = 0.5 * self.n_weights - 0.5 * alpha * np.sum(W**2, axis=1) + self.a - self.b * alpha
        return np.hstack([gw, gb[:, None]])

    def log_unnorm_density(self, X, batch=None) -> np.ndarray:
        idx = self._batch(batch)
        W, beta = self._split(X)
        margins = self.labels[idx][:, None] * (self.features[idx] @ W.T)
        loglik = -np.logaddexp(0.0, -margins).sum(axis=0) * (self.n_data / idx.size)
        alpha = np.exp(beta)
        logprior = (0.5 * self.n_weights + self.a) * beta - 0.5 * alpha * np.sum(W**2, axis=1) - self.b * alpha
        return loglik + logprior

    def batch_sampler(self, rng):
        if not self.stochastic:
            return None
        return MinibatchSampler(self.n_data, self.batch_size, rng)

    def sample_prior(self, n: int, rng) -> np.ndarray:
        """Particles drawn from the prior: alpha ~ Gamma(a, rate b), w ~ N(0, I/alpha)."""
        g = as_generator(rng)
        alpha = g.gamma(self.a, 1.0 / self.b, size=n)
        W = g.standard_normal((n, self.n_weights)) / np.sqrt(alpha)[:, None]
        return np.hstack([W, np.log(alpha)[:, None]])

    def __repr__(self) -> str:
        return f"BlrPosterior(N={self.n_data}, weights={self.n_weights}, batch={self.batch_size})"


def blr_grad_log_posterior(state, posterior: BlrPosterior, batch=None) -> np.ndarray:
    """Minibatch estimate of the score at a single state [w, beta]."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (posterior.dim,):
        raise InvalidArgumentError(f"state must have {posterior.dim} entries")
    return posterior.score(state[None], batch)[0]


def blr_predictive(particles, features) -> np.ndarray:
    """Posterior-predictive P(y=+1 | x) averaged over weight particles.

    ``features`` must already carry the same columns (including any
    intercept) as the posterior design matrix; the last particle column
    (beta) is ignored.
    """
    P = particles.data if isinstance(particles, ParticleEnsemble) else np.atleast_2d(particles)
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if P.shape[1] != F.shape[1] + 1:
        raise InvalidArgumentError(
            f"particle dimension {P.shape[1]} != feature dimension {F.shape[1]} + 1"
        )
    return expit(F @ P[:, :-1].T).mean(axis=1)
