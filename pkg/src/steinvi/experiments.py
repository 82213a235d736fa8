"""Experiment drivers shared by the CLI and the acceptance suite."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import SgldConfig, map_gradient_ascent, run_sgld, run_sgld_chain
from .core import ParticleEnsemble, RngStream, ensemble_from_gaussian
from .dataio import Dataset, standardize, train_test_split
from .diagnostics import classification_metrics, estimate_expectation
from .kernels import BandwidthPolicy
from .svgd import AdaGrad, SvgdConfig, SvgdResult, run_svgd
from .targets import BlrPosterior, GaussianMixture, TestFunction, blr_predictive, gmm_moments, bimodal_mixture

INIT_STREAM = 1000
COS_STREAM = 2000
MC_STREAM = 3000
PRIOR_STREAM = 4000


# --- 1D Gaussian mixture ----------------------------------------------------

def gmm_test_functions(seed: int, trial: int) -> List[TestFunction]:
    """x, x^2 and cos(omega x + b) with omega ~ N(0,1), b ~ U[0, 2 pi) drawn per trial."""
    g = RngStream(seed, COS_STREAM + trial).gen
    omega = float(g.standard_normal())
    b = float(g.uniform(0.0, 2.0 * math.pi))
    return [TestFunction("x"), TestFunction("x2"), TestFunction("cos", omega, b)]


def run_gmm_trial(n: int, iterations: int, seed: int, trial: int = 0,
                  master: float = 0.05, momentum: float = 0.9,
                  init_mean: float = -10.0, init_std: float = 1.0,
                  bandwidth: Optional[BandwidthPolicy] = None,
                  record_every: int = 0, target: Optional[GaussianMixture] = None) -> SvgdResult:
    target = target or bimodal_mixture()
    init = ensemble_from_gaussian(n, 1, init_mean, init_std, RngStream(seed, INIT_STREAM + trial))
    config = SvgdConfig(iterations, AdaGrad(master, momentum), bandwidth or BandwidthPolicy(),
                        seed=seed, record_every=record_every)
    return run_svgd(config, target, init)


def monte_carlo_sample(n: int, seed: int, trial: int = 0,
                       target: Optional[GaussianMixture] = None) -> np.ndarray:
    target = target or bimodal_mixture()
    return target.sample(n, RngStream(seed, MC_STREAM + trial))


def moment_rows(particles, n: int, trial: int, functions: Sequence[TestFunction],
                target: GaussianMixture) -> List[Dict]:
    rows = []
    for h in functions:
        est = estimate_expectation(particles, h)
        truth = gmm_moments(target, h)
        rows.append({"n": n, "test_function": h.label, "trial": trial,
                     "estimate": est, "truth": truth, "squared_error": (est - truth) ** 2})
    return rows


# --- Bayesian logistic regression -------------------------------------------

@dataclass
class LogregProblem:
    train: Dataset
    test: Dataset
    posterior: BlrPosterior
    test_design: np.ndarray


def prepare_logreg(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0,
                   batch_size: int = 50, a: float = 1.0, b: float = 0.01,
                   standardize_features: bool = True) -> LogregProblem:
    train, test = train_test_split(dataset, test_fraction, seed)
    if standardize_features:
        train, test, _ = standardize(train, test)
    post = BlrPosterior(train.features, train.labels, a, b, batch_size=min(batch_size, train.n))
    return LogregProblem(train, test, post, BlrPosterior.with_intercept(test.features))


class MetricsRecorder:
    """Collects metrics rows at a fixed iteration cadence."""

    def __init__(self, problem: LogregProblem, method: str, record_every: int,
                 iterations: int, wallclock: bool = False):
        self.problem, self.method = problem, method
        self.record_every, self.iterations = record_every, iterations
        self.wallclock = wallclock
        self.rows: List[Dict] = []
        self._t0 = time.perf_counter()

    def due(self, t: int) -> bool:
        return t == 0 or t == self.iterations or (self.record_every > 0 and t % self.record_every == 0)

    def record(self, t: int, particles) -> None:
        p = self.problem
        m = classification_metrics(blr_predictive(particles, p.test_design), p.test.labels)
        self.rows.append({
            "method": self.method,
            "iteration": t,
            "epoch_fraction": t * p.posterior.batch_size / p.posterior.n_data,
            "accuracy": m["accuracy"],
            "avg_test_ll": m["log_likelihood"],
            "wallclock_seconds": time.perf_counter() - self._t0 if self.wallclock else float("nan"),
        })

    def __call__(self, t: int, particles) -> None:
        if self.due(t):
            self.record(t, particles)


def prior_init(problem: LogregProblem, n: int, seed: int) -> ParticleEnsemble:
    return ParticleEnsemble(problem.posterior.sample_prior(n, RngStream(seed, PRIOR_STREAM)))


def logreg_svgd(problem: LogregProblem, n: int, iterations: int, seed: int,
                master: float = 0.01, momentum: float = 0.9, record_every: int = 100,
                wallclock: bool = False, bandwidth: Optional[BandwidthPolicy] = None):
    rec = MetricsRecorder(problem, "svgd", record_every, iterations, wallclock)
    init = prior_init(problem, n, seed)
    rec(0, init)
    config = SvgdConfig(iterations, AdaGrad(master, momentum), bandwidth or BandwidthPolicy(), seed=seed)
    result = run_svgd(config, problem.posterior, init, callback=rec)
    return result.final, rec.rows


def logreg_map(problem: LogregProblem, iterations: int, seed: int, master: float = 0.01,
               momentum: float = 0.9, record_every: int = 100, wallclock: bool = False,
               full_batch: bool = False):
    target = problem.posterior
    if full_batch:
        target = BlrPosterior(target.features, target.labels, target.a, target.b, intercept=False)
    rec = MetricsRecorder(problem, "map", record_every, iterations, wallclock)
    x0 = prior_init(problem, 1, seed).data[0]
    rec(0, x0[None])
    traj = map_gradient_ascent(x0, target, AdaGrad(master, momentum), iterations, seed,
                               callback=lambda t, x: rec(t, x[None]))
    return traj[-1], rec.rows


def logreg_sgld_parallel(problem: LogregProblem, n: int, iterations: int, seed: int, a: float,
                         record_every: int = 100, wallclock: bool = False,
                         gradient_scale: float = 1.0):
    rec = MetricsRecorder(problem, "sgld-parallel", record_every, iterations, wallclock)
    init = prior_init(problem, n, seed)
    rec(0, init.data)
    cfg = SgldConfig(a, chains=n, gradient_scale=gradient_scale, seed=seed)
    final = run_sgld(cfg, problem.posterior, init, iterations, callback=rec)
    return final, rec.rows


def logreg_sgld_sequential(problem: LogregProblem, n: int, iterations: int, seed: int, a: float,
                           record_every: int = 100, wallclock: bool = False):
    rec = MetricsRecorder(problem, "sgld-seq", record_every, iterations, wallclock)
    x0 = prior_init(problem, 1, seed).data
    rec(0, x0)
    cfg = SgldConfig(a, chains=1, seed=seed)
    kept = run_sgld_chain(cfg, problem.posterior, x0, iterations, keep=n, callback=rec)
    return kept, rec.rows


def select_sgld_step(problem: LogregProblem, grid: Sequence[float], n: int, iterations: int,
                     seed: int, validation_fraction: float = 0.2) -> float:
    """Pick SGLD's step scale by validation log-likelihood on a split of the train set."""
    sub, val = train_test_split(problem.train, validation_fraction, seed + 1)
    post = problem.posterior
    inner = LogregProblem(sub, val,
                          BlrPosterior(sub.features, sub.labels, post.a, post.b,
                                       batch_size=min(post.batch_size, sub.n)),
                          BlrPosterior.with_intercept(val.features))
    best, best_ll = None, -np.inf
    for a in grid:
        final, _ = logreg_sgld_parallel(inner, n, iterations, seed, a, record_every=0)
        if not np.all(np.isfinite(final)):
            continue
        ll = classification_metrics(blr_predictive(final, inner.test_design), val.labels)["log_likelihood"]
        if ll > best_ll:
            best, best_ll = a, ll
    return best if best is not None else float(grid[0])
