import math

import numpy as np
import pytest

from steinvi.baselines import SgldConfig, map_gradient_ascent, run_sgld, run_sgld_chain, sgld_step
from steinvi.core import InvalidArgumentError, NonFiniteScoreError, RngStream, TargetDensity
from steinvi.svgd import AdaGrad, PolynomialDecay
from steinvi.targets import gaussian


class TestSgld:
    def test_step_sizes(self):
        cfg = SgldConfig(1.0)
        assert cfg.step_size(0) == 1.0
        assert cfg.step_size(1) == pytest.approx(math.exp(-0.55 * math.log(2)), rel=1e-15)
        assert cfg.step_size(1) == pytest.approx(0.683020, abs=1e-6)

    def test_noise_only_variance(self):
        cfg = SgldConfig(0.3, gradient_scale=0.0, chains=4, seed=1)
        streams = cfg.chain_streams()
        eps = cfg.step_size(5)
        steps = np.vstack([sgld_step(np.zeros((4, 2)), gaussian(dim=2), 5, cfg, streams)
                           for _ in range(2500)])
        assert steps.shape == (10_000, 2)
        np.testing.assert_allclose(steps.var(axis=0), eps, rtol=0.05)
        assert np.all(np.abs(steps.mean(axis=0)) <= 5 * np.sqrt(eps / 10_000))

    def test_deterministic(self):
        cfg = SgldConfig(0.1, chains=3, seed=9)
        a = run_sgld(cfg, gaussian(), np.zeros((3, 1)), 50)
        b = run_sgld(cfg, gaussian(), np.zeros((3, 1)), 50)
        assert a.tobytes() == b.tobytes()

    def test_chain_swap_only_reorders(self):
        cfg = SgldConfig(0.2, chains=3, seed=4)
        X = np.array([[0.0], [1.0], [-2.0]])
        streams = cfg.chain_streams()
        out = sgld_step(X, gaussian(), 3, cfg, streams)
        swapped = cfg.chain_streams()
        order = [2, 0, 1]
        out2 = sgld_step(X[order], gaussian(), 3, cfg, [swapped[i] for i in order])
        assert np.array_equal(out2, out[order])

    def test_long_run_variance(self):
        cfg = SgldConfig(0.5, chains=20, seed=2)
        samples = []

        def keep(t, X):
            if t > 5000:
                samples.append(X[:, 0].copy())

        run_sgld(cfg, gaussian(), np.zeros((20, 1)), 10_000, callback=keep)
        assert np.var(np.concatenate(samples)) == pytest.approx(1.0, rel=0.2)

    def test_sequential_chain(self):
        kept = run_sgld_chain(SgldConfig(0.5, seed=0), gaussian(), [0.0], 400, keep=10)
        assert kept.shape == (10, 1)

    def test_non_finite(self):
        class Bad(TargetDensity):
            dim = 1

            def score(self, X, batch=None):
                out = np.zeros_like(X)
                out[1] = np.inf
                return out

        cfg = SgldConfig(0.1, chains=2)
        with pytest.raises(NonFiniteScoreError) as err:
            sgld_step(np.zeros((2, 1)), Bad(), 0, cfg, cfg.chain_streams())
        assert err.value.particle == 1

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            SgldConfig(0.0)
        with pytest.raises(InvalidArgumentError):
            SgldConfig(1.0, chains=0)
        cfg = SgldConfig(1.0)
        with pytest.raises(InvalidArgumentError):
            sgld_step(np.zeros((1, 1)), gaussian(), -1, cfg, cfg.chain_streams())


class TestMap:
    def test_converges_monotonically(self):
        traj = map_gradient_ascent([5.0], gaussian(2.0), PolynomialDecay(0.1, 0.0), 200)
        dist = np.abs(traj[:, 0] - 2.0)
        assert np.all(np.diff(dist) < 0)
        assert traj[-1, 0] == pytest.approx(2.0, abs=1e-8)

    def test_fixed_point(self):
        traj = map_gradient_ascent([2.0], gaussian(2.0), AdaGrad(0.1), 10)
        assert np.all(traj == 2.0)

    def test_zero_step(self):
        traj = map_gradient_ascent([0.3, -0.2], gaussian(dim=2), PolynomialDecay(0.0), 20)
        assert np.all(traj == traj[0])

    def test_dimension_check(self):
        with pytest.raises(InvalidArgumentError):
            map_gradient_ascent([0.0, 1.0], gaussian(), AdaGrad(), 5)
