import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinvi.core import (
    InvalidArgumentError,
    NonFiniteScoreError,
    ParticleEnsemble,
    RngStream,
    TargetDensity,
    ensemble_from_gaussian,
)
from steinvi.kernels import BandwidthPolicy, RbfKernel, rbf_eval, rbf_grad_first
from steinvi.ksd import ksd_squared
from steinvi.svgd import (
    AdaGrad,
    PolynomialDecay,
    SvgdConfig,
    adagrad_step,
    run_svgd,
    svgd_direction,
    svgd_step,
)
from steinvi.targets import BlrPosterior, gaussian, bimodal_mixture


def brute_force_direction(X, S, h):
    """Double loop over the scalar kernel functions."""
    n, d = X.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(n):
            out[i] += rbf_eval(X[j], X[i], h) * S[j] + rbf_grad_first(X[j], X[i], h)
    return out / n


class TestDirection:
    def test_two_particle_hand_value(self):
        X = np.array([[-1.0], [1.0]])
        S = gaussian().score(X)
        phi = svgd_direction(X, S, RbfKernel(1.0)).total
        expected = 0.5 * (5 * math.exp(-4) - 1)
        assert phi[1, 0] == pytest.approx(expected, abs=1e-15)
        assert phi[1, 0] == pytest.approx(-0.454210, abs=1e-6)
        assert phi[0, 0] == pytest.approx(-expected, abs=1e-15)

    def test_single_particle_is_score(self):
        X = np.array([[0.3, -2.0]])
        S = np.array([[1.5, 0.25]])
        assert np.array_equal(svgd_direction(X, S, RbfKernel(0.7)).total, S)

    def test_coincident_particles(self):
        X = np.full((3, 2), 1.7)
        S = np.tile([[-1.7, 0.4]], (3, 1))
        phi = svgd_direction(X, S, RbfKernel(2.0))
        assert np.array_equal(phi.repulsive, np.zeros_like(X))
        np.testing.assert_allclose(phi.total, S, rtol=0, atol=1e-15)

    def test_matches_brute_force(self, rng):
        X = rng.normal(size=(7, 3))
        S = rng.normal(size=(7, 3))
        np.testing.assert_allclose(svgd_direction(X, S, RbfKernel(1.3)).total,
                                   brute_force_direction(X, S, 1.3), rtol=1e-12, atol=1e-14)

    @settings(max_examples=40)
    @given(arrays(np.float64, (6, 2), elements=st.floats(-3, 3)),
           arrays(np.float64, (6, 2), elements=st.floats(-3, 3)),
           st.permutations(range(6)))
    def test_decomposition_and_permutation(self, X, S, perm):
        k = RbfKernel(1.1)
        phi = svgd_direction(X, S, k)
        assert np.array_equal(phi.total, phi.driving + phi.repulsive)
        perm = list(perm)
        permuted = svgd_direction(X[perm], S[perm], k).total
        np.testing.assert_allclose(permuted, phi.total[perm], rtol=1e-12, atol=1e-14)

    @given(st.floats(0.01, 5), st.floats(0.1, 5))
    def test_symmetric_pair_is_antisymmetric(self, a, h):
        X = np.array([[-a], [a]])
        phi = svgd_direction(X, gaussian().score(X), RbfKernel(h)).total
        assert phi[0, 0] == -phi[1, 0]

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            svgd_direction(np.zeros((3, 2)), np.zeros((2, 2)), RbfKernel(1.0))
        with pytest.raises(InvalidArgumentError):
            svgd_direction(np.zeros((2, 1)), np.array([[np.inf], [0.0]]), RbfKernel(1.0))


class TestAdaGrad:
    def test_first_call(self):
        g = np.array([[2.0, -0.5]])
        step, st_ = adagrad_step(AdaGrad(0.1), g)
        np.testing.assert_allclose(step, 0.1 * g / (1e-6 + np.abs(g)))
        np.testing.assert_allclose(step, [[0.1, -0.1]], atol=1e-6)
        assert np.array_equal(st_.state, g**2)

    def test_zero_direction(self):
        step, st_ = adagrad_step(AdaGrad(0.1), np.zeros((2, 2)))
        step2, st2 = adagrad_step(st_, np.zeros((2, 2)))
        assert np.array_equal(step2, np.zeros((2, 2)))
        assert np.array_equal(st2.state, np.zeros((2, 2)))

    def test_recurrence_constant_gradient(self):
        g = np.ones((1, 1))
        s = AdaGrad(1.0, 0.9)
        step1, s = adagrad_step(s, g)
        step2, s = adagrad_step(s, g)
        assert s.state[0, 0] == pytest.approx(1.0)
        assert step1[0, 0] == pytest.approx(1 / (1e-6 + 1))
        assert step2[0, 0] == pytest.approx(step1[0, 0])

    def test_state_nonnegative(self, rng):
        s = AdaGrad(0.05)
        for _ in range(5):
            _, s = adagrad_step(s, rng.normal(size=(4, 3)))
        assert np.all(s.state >= 0)

    @pytest.mark.parametrize("kw", [dict(master=0.0), dict(momentum=1.0), dict(fudge=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgumentError):
            AdaGrad(**kw)


class TestPolynomialDecay:
    def test_step_sizes(self):
        s = PolynomialDecay(1.0)
        assert s.step_size(0) == 1.0
        assert s.step_size(1) == pytest.approx(2**-0.55)


class _NanAt(TargetDensity):
    dim = 1

    def __init__(self, row):
        self.row = row

    def score(self, X, batch=None):
        S = -X.copy()
        S[self.row] = np.nan
        return S


class TestStep:
    def test_single_particle_is_gradient_ascent(self):
        target = bimodal_mixture()
        ens = ParticleEnsemble([[0.7]])
        sched = PolynomialDecay(0.3)
        new, _, _ = svgd_step(ens, target, BandwidthPolicy(), sched, iteration=4)
        expected = ens.data + sched.step_size(4) * target.score(ens.data)
        assert np.array_equal(new.data, expected)

    def test_fixed_point(self):
        ens = ParticleEnsemble([[0.0]])
        new, _, row = svgd_step(ens, gaussian(), BandwidthPolicy(), AdaGrad(0.1))
        assert np.array_equal(new.data, ens.data)
        assert row.mean_grad_norm == 0.0

    def test_zero_step_is_identity(self, rng):
        ens = ParticleEnsemble(rng.normal(size=(5, 2)))
        new, _, _ = svgd_step(ens, gaussian(dim=2), BandwidthPolicy(), PolynomialDecay(0.0))
        assert new.data.tobytes() == ens.data.tobytes()

    def test_input_not_modified(self, rng):
        ens = ParticleEnsemble(rng.normal(size=(5, 1)))
        before = ens.data.copy()
        svgd_step(ens, gaussian(), BandwidthPolicy(), AdaGrad(0.1))
        assert np.array_equal(before, ens.data)

    def test_non_finite_score_reports_particle(self):
        ens = ParticleEnsemble([[0.0], [1.0], [2.0]])
        with pytest.raises(NonFiniteScoreError) as err:
            svgd_step(ens, _NanAt(2), BandwidthPolicy(), AdaGrad(0.1), iteration=7)
        assert err.value.particle == 2 and err.value.iteration == 7

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            svgd_step(ParticleEnsemble(np.zeros((2, 2))), gaussian(), BandwidthPolicy(), AdaGrad())

    def test_batch_per_particle(self, rng):
        F = rng.normal(size=(40, 2))
        y = np.where(rng.uniform(size=40) < 0.5, 1, -1)
        post = BlrPosterior(F, y, batch_size=5)
        ens = ParticleEnsemble(post.sample_prior(4, RngStream(0)))
        batcher = post.batch_sampler(RngStream(1))
        new, _, _ = svgd_step(ens, post, BandwidthPolicy(), AdaGrad(0.01), batcher,
                              batch_per_particle=True)
        assert new.data.shape == ens.data.shape
        assert batcher._pos == 20


class TestRun:
    def test_coincident_particles_stay_coincident(self):
        init = ParticleEnsemble(np.full((5, 1), -3.0))
        res = run_svgd(SvgdConfig(50, AdaGrad(0.05)), gaussian(), init)
        assert np.all(res.final.data == res.final.data[0])
        assert res.final.data[0, 0] > -3.0

    def test_deterministic(self):
        init = ensemble_from_gaussian(20, 1, -10, 1, RngStream(3))
        cfg = SvgdConfig(100, AdaGrad(0.05), seed=3, record_every=10)
        a = run_svgd(cfg, bimodal_mixture(), init)
        b = run_svgd(cfg, bimodal_mixture(), init)
        assert a.final.data.tobytes() == b.final.data.tobytes()
        assert a.diagnostics == b.diagnostics

    def test_records_and_diagnostics(self):
        init = ensemble_from_gaussian(10, 1, 0, 1, RngStream(0))
        res = run_svgd(SvgdConfig(25, AdaGrad(0.05), record_every=10, compute_ksd=True), gaussian(), init)
        assert [it for it, _ in res.snapshots] == [0, 10, 20, 25]
        assert len(res.diagnostics) == 25
        assert all(r.ksd is not None and r.ksd >= 0 for r in res.diagnostics)
        assert res.diagnostics[-1].iteration == 24

    def test_final_only(self):
        init = ensemble_from_gaussian(4, 1, 0, 1, RngStream(0))
        res = run_svgd(SvgdConfig(3), gaussian(), init)
        assert [it for it, _ in res.snapshots] == [3]

    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            SvgdConfig(0)

    def test_frozen_median_policy(self):
        init = ensemble_from_gaussian(10, 1, 0, 1, RngStream(0))
        res = run_svgd(SvgdConfig(5, bandwidth=BandwidthPolicy("median")), gaussian(), init)
        assert len({r.bandwidth for r in res.diagnostics}) == 1

    def test_ksd_decreases(self):
        """Statistical descent tendency: 19 of 20 seeds reduce the V-statistic."""
        target, k = gaussian(), RbfKernel(1.0)
        wins = 0
        for seed in range(20):
            init = ensemble_from_gaussian(30, 1, 1.5, 0.5, RngStream(seed))
            res = run_svgd(SvgdConfig(500, PolynomialDecay(0.05, 0.0), seed=seed), target, init)
            wins += ksd_squared(res.final, target, k).value < ksd_squared(init, target, k).value
        assert wins >= 19
