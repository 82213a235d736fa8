import numpy as np
import pytest

from steinvi.core import (
    InvalidArgumentError,
    ParticleEnsemble,
    RngStream,
    ensemble_from_gaussian,
)


class TestEnsembleFromGaussian:
    def test_far_initialisation_mean(self):
        ens = ensemble_from_gaussian(100, 1, -10.0, 1.0, RngStream(7))
        assert (ens.n, ens.d) == (100, 1)
        assert abs(ens.data.mean() + 10.0) <= 4 / np.sqrt(100)

    @pytest.mark.parametrize("n,d,std", [(1, 3, 0.0), (0, 1, 1.0), (3, 0, 1.0), (2, 2, -1.0)])
    def test_degenerate_arguments(self, n, d, std):
        with pytest.raises(InvalidArgumentError):
            ensemble_from_gaussian(n, d, 0.0, std, RngStream(0))

    def test_same_seed_is_bitwise_identical(self):
        a = ensemble_from_gaussian(50, 3, [1.0, 2.0, 3.0], 2.0, RngStream(99))
        b = ensemble_from_gaussian(50, 3, [1.0, 2.0, 3.0], 2.0, RngStream(99))
        assert a.data.tobytes() == b.data.tobytes()

    def test_large_sample_moments(self):
        ens = ensemble_from_gaussian(100_000, 1, 3.0, 2.0, RngStream(1))
        x = ens.data[:, 0]
        se = 2.0 / np.sqrt(x.size)
        assert abs(x.mean() - 3.0) <= 5 * se
        assert abs(x.var() - 4.0) <= 0.05 * 4.0


class TestRngStream:
    def test_streams_differ(self):
        a = RngStream(5, 0).normal(size=8)
        b = RngStream(5, 1).normal(size=8)
        assert not np.array_equal(a, b)

    def test_reproducible(self):
        assert np.array_equal(RngStream(5, 3).uniform(size=4), RngStream(5, 3).uniform(size=4))

    def test_uses_philox(self):
        assert isinstance(RngStream(0).gen.bit_generator, np.random.Philox)

    def test_negative_seed_rejected(self):
        with pytest.raises(InvalidArgumentError):
            RngStream(-1)


class TestParticleEnsemble:
    def test_value_semantics(self):
        src = np.arange(6.0).reshape(3, 2)
        ens = ParticleEnsemble(src)
        src[0, 0] = 100.0
        assert ens.data[0, 0] == 0.0
        with pytest.raises(ValueError):
            ens.data[0, 0] = 1.0
        work = ens.copy()
        work += 1
        assert ens.data[0, 0] == 0.0

    def test_row_major(self):
        ens = ParticleEnsemble(np.asfortranarray(np.ones((4, 3))))
        assert ens.data.flags.c_contiguous

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            ParticleEnsemble([[0.0], [np.nan]])

    def test_vector_becomes_column(self):
        assert ParticleEnsemble([1.0, 2.0, 3.0]).data.shape == (3, 1)
