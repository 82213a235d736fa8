import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinvi.core import InvalidArgumentError
from steinvi.dataio import (
    Dataset,
    ParseError,
    load_csv,
    load_dataset,
    load_libsvm,
    standardize,
    synth_logistic,
    train_test_split,
    write_libsvm,
)
from steinvi.experiments import logreg_map, prepare_logreg


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLibsvm:
    def test_basic_line(self, tmp_path):
        ds = load_libsvm(write(tmp_path, "a.txt", "+1 1:0.5 3:2.0\n"))
        np.testing.assert_array_equal(ds.features, [[0.5, 0.0, 2.0]])
        assert ds.labels.tolist() == [1]
        assert len(ds.metadata["sha256"]) == 64

    def test_one_two_labels(self, tmp_path):
        ds = load_libsvm(write(tmp_path, "b.txt", "2 1:1\n1 2:1\n"))
        assert ds.labels.tolist() == [1, -1]
        assert ds.metadata["label_map"] == {"1": -1, "2": 1}

    def test_zero_one_labels(self, tmp_path):
        assert load_libsvm(write(tmp_path, "c.txt", "0 1:1\n1 1:2\n")).labels.tolist() == [-1, 1]

    def test_parse_error_names_line(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_libsvm(write(tmp_path, "d.txt", "1 1:abc\n"))
        assert err.value.line == 1 and "line 1" in str(err.value)

    def test_unknown_labels(self, tmp_path):
        with pytest.raises(ParseError, match="3"):
            load_libsvm(write(tmp_path, "e.txt", "1 1:1\n3 1:1\n"))

    def test_bad_index(self, tmp_path):
        with pytest.raises(ParseError):
            load_libsvm(write(tmp_path, "f.txt", "1 0:1\n"))

    @settings(max_examples=25, deadline=None)
    @given(arrays(np.float64, (6, 4), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
           arrays(np.int64, 6, elements=st.sampled_from([-1, 1])))
    def test_round_trip(self, tmp_path_factory, X, y):
        path = tmp_path_factory.mktemp("rt") / "rt.libsvm"
        write_libsvm(Dataset(X, y), path)
        back = load_libsvm(path, n_features=4)
        assert back.features.tobytes() == X.tobytes() or np.array_equal(back.features, X)
        assert np.array_equal(back.labels, y)


class TestCsv:
    def test_label_column(self, tmp_path):
        ds = load_csv(write(tmp_path, "a.csv", "f1,label,f2\n1.5,1,2\n0,0,3\n"))
        np.testing.assert_array_equal(ds.features, [[1.5, 2.0], [0.0, 3.0]])
        assert ds.labels.tolist() == [1, -1]
        assert ds.feature_names == ["f1", "f2"]

    def test_missing_label(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path, "b.csv", "a,b\n1,2\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_csv(write(tmp_path, "c.csv", "a,label\n1,1\nx,1\n"))
        assert err.value.line == 3

    def test_dispatch(self, tmp_path):
        assert load_dataset(write(tmp_path, "d.csv", "a,label\n1,1\n")).n == 1
        assert load_dataset(write(tmp_path, "d.svm", "-1 1:1\n")).n == 1


class TestSplit:
    def ds(self, n=10):
        return Dataset(np.arange(n, dtype=float)[:, None], np.ones(n, dtype=int))

    def test_sizes(self):
        tr, te = train_test_split(self.ds(), 0.2, 0)
        assert (tr.n, te.n) == (8, 2)

    def test_deterministic_and_exhaustive(self):
        tr, te = train_test_split(self.ds(), 0.3, 5)
        tr2, te2 = train_test_split(self.ds(), 0.3, 5)
        assert np.array_equal(tr.features, tr2.features)
        ids = np.concatenate([tr.features[:, 0], te.features[:, 0]])
        assert sorted(ids.tolist()) == list(range(10))

    @pytest.mark.parametrize("frac", [0.0, 1.0, 0.05])
    def test_empty_side(self, frac):
        with pytest.raises(InvalidArgumentError):
            train_test_split(self.ds(), frac, 0)


class TestStandardize:
    def test_column(self):
        tr = Dataset(np.array([[0.0, 5.0], [2.0, 5.0]]), [1, -1])
        tr2, _, t = standardize(tr)
        np.testing.assert_allclose(tr2.features[:, 0], [-1.0, 1.0])
        np.testing.assert_allclose(tr2.features[:, 1], [0.0, 0.0])
        assert t.scale[1] == 1.0
        assert tr2.metadata["standardized"]

    def test_round_trip(self, rng):
        X = rng.normal(3.0, 2.0, size=(20, 3))
        _, _, t = standardize(Dataset(X, np.ones(20, dtype=int)))
        np.testing.assert_allclose(t.inverse(t.apply(X)), X, atol=1e-12)
        assert not np.allclose(t.apply(t.apply(X)), X)

    def test_test_uses_train_stats(self):
        tr = Dataset(np.array([[0.0], [2.0]]), [1, -1])
        te = Dataset(np.array([[4.0]]), [1])
        _, te2, _ = standardize(tr, te)
        assert te2.features[0, 0] == 3.0


class TestSynthetic:
    def test_zero_weights_balanced(self):
        ds = synth_logistic(4000, 3, np.zeros(3), seed=1)
        assert abs((ds.labels == 1).mean() - 0.5) <= 5 / np.sqrt(4000)

    def test_deterministic(self):
        a, b = synth_logistic(100, 4, 3.0, seed=7), synth_logistic(100, 4, 3.0, seed=7)
        assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
        assert np.linalg.norm(a.metadata["true_weights"]) == pytest.approx(3.0)

    def test_separable_map_accuracy(self):
        # Bayes accuracy for 10 e1 is only 0.9499; 20 e1 gives 0.9825
        w = np.zeros(3)
        w[0] = 20.0
        problem = prepare_logreg(synth_logistic(1000, 3, w, seed=2), 0.2, 2, batch_size=800)
        _, rows = logreg_map(problem, 2000, 2, master=0.05, record_every=0, full_batch=True)
        assert rows[-1]["accuracy"] >= 0.95

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            synth_logistic(5, 2)
        with pytest.raises(InvalidArgumentError):
            synth_logistic(20, 2, np.ones(3))
