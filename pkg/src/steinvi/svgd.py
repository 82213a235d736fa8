"""Stein variational gradient descent: update direction, step schedules and
the particle transport loop."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .core import (
    InvalidArgumentError,
    NonFiniteScoreError,
    ParticleEnsemble,
    RngStream,
    TargetDensity,
)
from .kernels import BandwidthPolicy, RbfKernel
from .ksd import ksd_from_scores

BATCH_STREAM = 1


# --- step schedules -------------------------------------------------------

@dataclass(frozen=True)
class AdaGrad:
    """AdaGrad with an exponentially decayed squared-gradient history.

    history <- momentum * history + (1 - momentum) * g^2 (history <- g^2 on the
    first call); step = master * g / (fudge + sqrt(history)).
    """

    master: float = 0.05
    momentum: float = 0.9
    fudge: float = 1e-6
    state: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.master > 0:
            raise InvalidArgumentError("master step must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgumentError("momentum must lie in [0, 1)")
        if not self.fudge > 0:
            raise InvalidArgumentError("fudge factor must be positive")

    def apply(self, direction: np.ndarray, t: int) -> Tuple[np.ndarray, "AdaGrad"]:
        return adagrad_step(self, direction)

    def reset(self) -> "AdaGrad":
        return replace(self, state=None)


def adagrad_step(state: AdaGrad, direction: np.ndarray) -> Tuple[np.ndarray, AdaGrad]:
    g2 = direction**2
    if state.state is None:
        hist = g2
    else:
        if state.state.shape != direction.shape:
            raise InvalidArgumentError("AdaGrad state shape does not match direction")
        hist = state.momentum * state.state + (1.0 - state.momentum) * g2
    step = state.master * direction / (state.fudge + np.sqrt(hist))
    return step, replace(state, state=hist)


@dataclass(frozen=True)
class PolynomialDecay:
    """Step size a / (offset + t)^exponent, applied uniformly."""

    a: float
    exponent: float = 0.55
    offset: float = 1.0

    def __post_init__(self):
        if not self.a >= 0:
            raise InvalidArgumentError("step scale must be non-negative")
        if not self.offset > 0:
            raise InvalidArgumentError("offset must be positive")

    def step_size(self, t: int) -> float:
        return self.a / (self.offset + t) ** self.exponent

    def apply(self, direction: np.ndarray, t: int) -> Tuple[np.ndarray, "PolynomialDecay"]:
        return self.step_size(t) * direction, self

    def reset(self) -> "PolynomialDecay":
        return self


StepSchedule = Union[AdaGrad, PolynomialDecay]


# --- the update direction -------------------------------------------------

class SvgdDirection(NamedTuple):
    total: np.ndarray
    driving: np.ndarray
    repulsive: np.ndarray


def _as_array(ensemble) -> np.ndarray:
    return ensemble.data if isinstance(ensemble, ParticleEnsemble) else np.atleast_2d(
        np.asarray(ensemble, dtype=np.float64))


def svgd_direction(ensemble, scores: np.ndarray, kernel: RbfKernel) -> SvgdDirection:
    """phi(x_i) = (1/n) sum_j [k(x_j, x_i) s_j + grad_{x_j} k(x_j, x_i)].

    For the RBF kernel grad_{x_j} k(x_j, x_i) = (2/h)(x_i - x_j) k(x_i, x_j); the
    pairwise differences are formed explicitly so coincident particles get an
    exactly zero repulsive term.
    """
    X = _as_array(ensemble)
    S = np.asarray(scores, dtype=np.float64)
    if S.shape != X.shape:
        raise InvalidArgumentError(f"scores shape {S.shape} != particles shape {X.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidArgumentError("scores must be finite")
    diff = X[:, None, :] - X[None, :, :]
    return _direction(diff, np.einsum("ijk,ijk->ij", diff, diff), S, kernel.h)


def _direction(diff: np.ndarray, sq: np.ndarray, S: np.ndarray, h: float) -> SvgdDirection:
    # explicit products + numpy reductions: fixed per-row summation order (no BLAS/FMA)
    n = S.shape[0]
    K = np.exp(-sq / h)
    driving = (K[:, :, None] * S[None, :, :]).sum(axis=1) / n
    repulsive = (2.0 / h) * (K[:, :, None] * diff).sum(axis=1) / n
    return SvgdDirection(driving + repulsive, driving, repulsive)


def direction_norm_squared(ensemble, scores: np.ndarray, kernel: RbfKernel) -> float:
    """Squared RKHS norm of the empirical direction, from its block structure.

    ||phi||^2 = ||drive||^2 + 2 <drive, repel> + ||repel||^2 with the inner
    products obtained through the (derivative) reproducing property.
    """
    X = _as_array(ensemble)
    S = np.asarray(scores, dtype=np.float64)
    n, d = X.shape
    h = kernel.h
    diff = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    K = np.exp(-sq / h)
    drive_drive = np.sum(K * (S[:, None, :] * S[None, :, :]).sum(axis=-1))
    # <k(x_i,.) s_i, grad_{x_j} k(x_j,.)> = s_i . (2/h)(x_i - x_j) k_ij
    cross = np.sum(K * np.einsum("ik,ijk->ij", S, diff)) * (2.0 / h)
    repel_repel = np.sum(K * (2.0 * d / h - 4.0 * sq / h**2))
    return float((drive_drive + 2.0 * cross + repel_repel) / n**2)


# --- transport loop -------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsRow:
    iteration: int
    mean_grad_norm: float
    mean_repulsive_norm: float
    bandwidth: float
    ksd: Optional[float] = None


def evaluate_scores(X: np.ndarray, target: TargetDensity, batcher=None,
                    batch_per_particle: bool = False,
                    iteration: Optional[int] = None) -> np.ndarray:
    """Scores for every particle, with at most one shared minibatch unless
    ``batch_per_particle`` is set."""
    if batcher is None:
        S = target.score(X)
    elif batch_per_particle:
        S = np.vstack([target.score(X[i : i + 1], batcher.next()) for i in range(X.shape[0])])
    else:
        S = target.score(X, batcher.next())
    bad = ~np.all(np.isfinite(S), axis=1)
    if np.any(bad):
        raise NonFiniteScoreError(int(np.argmax(bad)), iteration)
    return S


def svgd_step(ensemble: ParticleEnsemble, target: TargetDensity, policy: BandwidthPolicy,
              schedule: StepSchedule, batcher=None, iteration: int = 0,
              initial_h: Optional[float] = None, batch_per_particle: bool = False,
              with_ksd: bool = False):
    """One Jacobi-style SVGD update; returns (ensemble', schedule', diagnostics)."""
    if target.dim != ensemble.d:
        raise InvalidArgumentError(f"target dim {target.dim} != particle dim {ensemble.d}")
    X = ensemble.data
    S = evaluate_scores(X, target, batcher, batch_per_particle, iteration)
    diff = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    h = policy.bandwidth(ensemble, initial_h, sq)
    kernel = RbfKernel(h)
    phi = _direction(diff, sq, S, h)
    step, schedule = schedule.apply(phi.total, iteration)
    ksd = None
    if with_ksd:
        ksd = ksd_from_scores(X, S, kernel, "V")
    row = DiagnosticsRow(
        iteration=iteration,
        mean_grad_norm=float(np.mean(np.linalg.norm(S, axis=1))),
        mean_repulsive_norm=float(np.mean(np.linalg.norm(phi.repulsive, axis=1))),
        bandwidth=h,
        ksd=ksd,
    )
    return ParticleEnsemble(X + step), schedule, row


@dataclass(frozen=True)
class SvgdConfig:
    iterations: int
    schedule: StepSchedule = field(default_factory=AdaGrad)
    bandwidth: BandwidthPolicy = field(default_factory=BandwidthPolicy)
    seed: int = 0
    record_every: int = 0
    batch_per_particle: bool = False
    compute_ksd: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if self.record_every < 0:
            raise InvalidArgumentError("record_every must be >= 0")


@dataclass
class SvgdResult:
    final: ParticleEnsemble
    diagnostics: List[DiagnosticsRow]
    snapshots: List[Tuple[int, np.ndarray]]


def batch_stream(seed: int) -> RngStream:
    """Stream feeding minibatch indices; shared with the MAP reference loop."""
    return RngStream(seed, BATCH_STREAM)


def run_svgd(config: SvgdConfig, target: TargetDensity, init: ParticleEnsemble,
             callback=None) -> SvgdResult:
    """Run ``config.iterations`` SVGD steps from ``init``.

    Snapshots are taken at iteration 0, every ``record_every`` steps and at the
    end (final only when ``record_every`` is 0). ``callback(t, ensemble)`` is
    invoked after each step, t counting completed steps.
    """
    batcher = target.batch_sampler(batch_stream(config.seed)) if target.stochastic else None
    schedule = config.schedule.reset()
    initial_h = config.bandwidth.bandwidth(init) if config.bandwidth.kind == "median" else None
    ens = init
    diags: List[DiagnosticsRow] = []
    snaps: List[Tuple[int, np.ndarray]] = []
    if config.record_every:
        snaps.append((0, ens.data))
    for t in range(config.iterations):
        ens, schedule, row = svgd_step(
            ens, target, config.bandwidth, schedule, batcher, t, initial_h,
            config.batch_per_particle, config.compute_ksd,
        )
        diags.append(row)
        done = t + 1
        if config.record_every and done % config.record_every == 0 and done != config.iterations:
            snaps.append((done, ens.data))
        if callback is not None:
            callback(done, ens)
    snaps.append((config.iterations, ens.data))
    return SvgdResult(ens, diags, snaps)
