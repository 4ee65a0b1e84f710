import numpy as np
import pytest

from mlcc.data import DataError, Dataset, SyntheticSpec, default_interactions, generate_synthetic, load_csv, split
from mlcc.errors import ConfigError
from mlcc.training import auc


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_minimal_file(self, tmp_path):
        ds = load_csv(write(tmp_path, "label,f1,f2\n1,a,b\n"))
        assert len(ds) == 1
        assert ds.field_names == ["f1", "f2"]
        assert ds.values.tolist() == [["a", "b"]]

    def test_wrong_field_count_skipped(self, tmp_path):
        ds = load_csv(write(tmp_path, "label,f1,f2\n1,a,b\n0,a\n0,c,d\n"))
        assert len(ds) == 2
        assert ds.skipped["field_count"] == 1

    def test_bad_label_skipped(self, tmp_path):
        ds = load_csv(write(tmp_path, "label,f1\n1,a\n2,b\nyes,c\n0,d\n"))
        assert ds.labels.tolist() == [1, 0]
        assert ds.skipped["label"] == 2

    def test_missing_header(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, "1,a,b\n"))

    def test_no_usable_rows(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, "label,f1\n7,a\n"))

    def test_schema_mismatch(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, "label,f1\n1,a\n"), field_names=["user"])

    def test_unreadable(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(tmp_path / "missing.csv")

    def test_write_read_round_trip(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(n_fields=3, vocab=5, n_rows=50, seed=1))
        ds.write_csv(tmp_path / "s.csv")
        back = load_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.values, ds.values)


class TestSynthetic:
    def test_balanced_without_signal(self):
        ds = generate_synthetic(SyntheticSpec(n_fields=4, alpha=0, beta=0, bias=0, noise=0,
                                              pairs=[(0, 1)], triples=[(0, 1, 2)], n_rows=100_000, seed=0))
        assert 0.49 <= ds.labels.mean() <= 0.51

    def test_saturated_bias(self):
        low = generate_synthetic(SyntheticSpec(n_fields=3, alpha=0, beta=0, bias=-1e9, n_rows=2000))
        high = generate_synthetic(SyntheticSpec(n_fields=3, alpha=0, beta=0, bias=10, noise=0, n_rows=2000))
        assert low.labels.sum() == 0
        assert high.labels.mean() > 0.99

    def test_deterministic_bytes(self):
        spec = SyntheticSpec(n_fields=5, pairs=[(0, 1)], triples=[(1, 2, 3)], n_rows=70_000, seed=11)
        assert generate_synthetic(spec).to_csv_bytes() == generate_synthetic(spec).to_csv_bytes()

    def test_seed_changes_data(self):
        a = generate_synthetic(SyntheticSpec(n_fields=3, n_rows=100, seed=0))
        b = generate_synthetic(SyntheticSpec(n_fields=3, n_rows=100, seed=1))
        assert a.to_csv_bytes() != b.to_csv_bytes()

    def test_values_within_vocab(self):
        ds = generate_synthetic(SyntheticSpec(n_fields=2, vocab=7, n_rows=500))
        assert set(np.unique(ds.values)) <= {str(v) for v in range(7)}

    def test_oracle_ceiling_with_triples(self):
        pairs, triples = default_interactions(16, 2, 2, 1234)
        spec = SyntheticSpec(16, 100, 2, pairs, triples, 1.5, 1.5, 0.0, 0.0, 100_000, 0)
        ds = generate_synthetic(spec)
        assert auc(ds.logits, ds.labels) >= 0.90

    @pytest.mark.parametrize("pairs, triples", [
        ([(0, 0)], []),
        ([], [(0, 1, 5)]),
        ([(0, 1, 2)], []),
    ])
    def test_invalid_tuples(self, pairs, triples):
        with pytest.raises(ConfigError):
            generate_synthetic(SyntheticSpec(n_fields=4, pairs=pairs, triples=triples))

    def test_negative_noise(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(noise=-1.0).validate()

    def test_default_interactions_are_distinct(self):
        pairs, triples = default_interactions(16, 5, 5, 3)
        assert len(set(pairs)) == 5 and len(set(triples)) == 5
        assert all(len(set(t)) == 3 for t in triples)


class TestSplit:
    def make(self, m):
        return Dataset(np.arange(m) % 2, np.arange(m).astype(str).reshape(m, 1), ["id"])

    def test_ninety_one_nine(self):
        tr, va, te = split(self.make(100), (0.90, 0.01, 0.09), seed=0)
        assert (len(tr), len(va), len(te)) == (90, 1, 9)

    def test_partition(self):
        parts = split(self.make(257), seed=4)
        ids = np.concatenate([p.values[:, 0] for p in parts])
        assert sorted(ids.tolist()) == sorted(np.arange(257).astype(str).tolist())

    def test_zero_ratio_rejected(self):
        with pytest.raises(ConfigError):
            split(self.make(10), (1, 0, 0))

    def test_sum_rejected(self):
        with pytest.raises(ConfigError):
            split(self.make(10), (0.5, 0.3, 0.3))

    def test_empty_partition(self):
        with pytest.raises(DataError):
            split(self.make(10))

    def test_seeded(self):
        a = split(self.make(100), seed=2)[0].values
        b = split(self.make(100), seed=2)[0].values
        c = split(self.make(100), seed=3)[0].values
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
