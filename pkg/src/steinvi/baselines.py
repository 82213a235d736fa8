"""Comparison samplers: SGLD (parallel chains or one long chain) and MAP
gradient ascent."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import InvalidArgumentError, NonFiniteScoreError, ParticleEnsemble, RngStream, TargetDensity
from .svgd import StepSchedule, batch_stream

CHAIN_STREAM_OFFSET = 100


@dataclass(frozen=True)
class SgldConfig:
    a: float
    exponent: float = 0.55
    chains: int = 1
    gradient_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidArgumentError("SGLD step scale a must be positive")
        if self.chains < 1:
            raise InvalidArgumentError("need at least one chain")

    def step_size(self, t: int) -> float:
        return self.a / (t + 1) ** self.exponent

    def chain_streams(self) -> List[RngStream]:
        return [RngStream(self.seed, CHAIN_STREAM_OFFSET + c) for c in range(self.chains)]


def sgld_step(particles, target: TargetDensity, t: int, config: SgldConfig,
              streams: Sequence[RngStream], batch=None) -> np.ndarray:
    """x <- x + (eps_t / 2) * scale * grad log p(x) + N(0, eps_t I), one row per chain.

    Chain c draws its noise from ``streams[c]``; a minibatch, if any, is shared.
    """
    if t < 0:
        raise InvalidArgumentError("iteration index must be non-negative")
    X = particles.data if isinstance(particles, ParticleEnsemble) else np.atleast_2d(particles)
    if len(streams) != X.shape[0]:
        raise InvalidArgumentError("need one stream per chain")
    G = target.score(X, batch)
    bad = ~np.all(np.isfinite(G), axis=1)
    if np.any(bad):
        raise NonFiniteScoreError(int(np.argmax(bad)), t)
    eps = config.step_size(t)
    noise = np.vstack([s.gen.standard_normal(X.shape[1]) for s in streams])
    return X + 0.5 * eps * config.gradient_scale * G + math.sqrt(eps) * noise


def run_sgld(config: SgldConfig, target: TargetDensity, init, iterations: int,
             callback: Optional[Callable] = None) -> np.ndarray:
    """Run ``config.chains`` parallel chains; returns the last state of each."""
    X = init.data if isinstance(init, ParticleEnsemble) else np.atleast_2d(np.asarray(init, dtype=np.float64))
    if X.shape[0] != config.chains:
        raise InvalidArgumentError("initial state must have one row per chain")
    streams = config.chain_streams()
    batcher = target.batch_sampler(batch_stream(config.seed)) if target.stochastic else None
    for t in range(iterations):
        X = sgld_step(X, target, t, config, streams, batcher.next() if batcher else None)
        if callback is not None:
            callback(t + 1, X)
    return X


def run_sgld_chain(config: SgldConfig, target: TargetDensity, x0, iterations: int,
                   keep: int, callback: Optional[Callable] = None) -> np.ndarray:
    """One long chain; returns ``keep`` evenly thinned states from the second half."""
    if config.chains != 1:
        raise InvalidArgumentError("sequential SGLD uses a single chain")
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    streams = config.chain_streams()
    batcher = target.batch_sampler(batch_stream(config.seed)) if target.stochastic else None
    start = iterations // 2
    picks = set(np.linspace(start, iterations - 1, min(keep, iterations - start)).astype(int).tolist())
    kept = []
    for t in range(iterations):
        x = sgld_step(x, target, t, config, streams, batcher.next() if batcher else None)
        if t in picks:
            kept.append(x[0])
        if callback is not None:
            callback(t + 1, np.array(kept) if kept else x)
    return np.array(kept)


def map_gradient_ascent(x0, target: TargetDensity, schedule: StepSchedule, iterations: int,
                        seed: int = 0, callback: Optional[Callable] = None) -> np.ndarray:
    """Plain gradient ascent on log p; returns the (iterations + 1) x d trajectory.

    Minibatches (for stochastic targets) come from the same seeded stream as
    ``run_svgd`` so a single-particle SVGD run can be compared bit for bit.
    """
    x = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != target.dim:
        raise InvalidArgumentError(f"x0 has {x.shape[1]} entries, target dim is {target.dim}")
    batcher = target.batch_sampler(batch_stream(seed)) if target.stochastic else None
    schedule = schedule.reset()
    traj = [x[0].copy()]
    for t in range(iterations):
        g = target.score(x, batcher.next() if batcher else None)
        if not np.all(np.isfinite(g)):
            raise NonFiniteScoreError(0, t)
        step, schedule = schedule.apply(g, t)
        x = x + step
        traj.append(x[0].copy())
        if callback is not None:
            callback(t + 1, x[0])
    return np.array(traj)
