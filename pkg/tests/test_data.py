import numpy as np
import pytest

from causalboot import (
    ConfigError,
    DataError,
    ObservationTable,
    draw_subset,
    load_csv,
    subset_size,
)
from causalboot import rng as cbrng


class TestObservationTable:
    def test_counts(self, small_table):
        assert small_table.n == 8
        assert small_table.n0 == 4
        assert small_table.n1 == 4
        assert small_table.n0 + small_table.n1 == small_table.n
        assert small_table.n1 == int(small_table.w.sum())

    def test_arrays_are_frozen(self, small_table):
        with pytest.raises(ValueError):
            small_table.y[0] = 99.0

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="length mismatch"):
            ObservationTable(y=np.zeros(3), w=np.zeros(2, dtype=int), x=np.zeros((3, 1)))

    def test_non_binary_treatment(self):
        with pytest.raises(DataError, match="non-binary"):
            ObservationTable(y=np.zeros(3), w=np.array([0, 1, 2]), x=np.zeros((3, 1)))

    def test_non_finite_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            ObservationTable(
                y=np.array([1.0, np.nan]), w=np.array([0, 1]), x=np.zeros((2, 1))
            )


class TestLoadCsv:
    def test_basic_load(self, write_csv):
        path = write_csv(
            "basic.csv",
            ["y", "w", "x1"],
            [[1.0, 0, 0.5], [2.0, 1, -0.5], [3.0, 0, 1.5], [4.0, 1, 0.0]],
        )
        table = load_csv(path, "y", "w", ["x1"])
        assert table.n == 4
        assert table.n0 == 2
        assert table.n1 == 2
        assert table.dropped_rows == 0
        # row order is file order
        assert list(table.y) == [1.0, 2.0, 3.0, 4.0]

    def test_non_binary_treatment_value(self, write_csv):
        path = write_csv("bad_w.csv", ["y", "w", "x1"], [[1.0, 0, 0.5], [2.0, 2, 1.0]])
        with pytest.raises(DataError, match="non-binary treatment"):
            load_csv(path, "y", "w", ["x1"])

    def test_drop_policy_counts_dropped_rows(self, write_csv):
        path = write_csv(
            "missing.csv",
            ["y", "w", "x1"],
            [[1.0, 0, 0.5], [2.0, 1, ""], [3.0, 0, 1.5], [4.0, 1, 0.25]],
        )
        table = load_csv(path, "y", "w", ["x1"], na_policy="drop")
        assert table.n == 3
        assert table.dropped_rows == 1

    def test_reject_policy_errors_on_missing(self, write_csv):
        path = write_csv("missing2.csv", ["y", "w", "x1"], [[1.0, 0, ""], [2.0, 1, 0.5]])
        with pytest.raises(DataError, match="missing value"):
            load_csv(path, "y", "w", ["x1"])

    def test_reject_policy_errors_on_garbage(self, write_csv):
        path = write_csv("garbage.csv", ["y", "w", "x1"], [[1.0, 0, "abc"], [2.0, 1, 0.5]])
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(path, "y", "w", ["x1"])

    def test_missing_column(self, write_csv):
        path = write_csv("cols.csv", ["y", "w"], [[1.0, 0], [2.0, 1]])
        with pytest.raises(DataError, match="missing column"):
            load_csv(path, "y", "w", ["x1"])

    def test_empty_after_drops(self, write_csv):
        path = write_csv("all_missing.csv", ["y", "w", "x1"], [["", 0, 1.0], ["", 1, 2.0]])
        with pytest.raises(DataError, match="no usable rows"):
            load_csv(path, "y", "w", ["x1"], na_policy="drop")

    def test_unused_columns_ignored(self, write_csv):
        path = write_csv(
            "extra.csv",
            ["id", "y", "w", "x1", "junk"],
            [[7, 1.0, 0, 0.5, "zzz"], [8, 2.0, 1, -0.5, "qqq"]],
        )
        table = load_csv(path, "y", "w", ["x1"])
        assert table.n == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_csv(tmp_path / "nope.csv", "y", "w", ["x1"])


class TestSubsetSize:
    def test_reference_value(self):
        # 10000**0.7 = 630.957...
        assert subset_size(10000, 0.7) == 631

    def test_identity_exponent(self):
        for n in (2, 17, 10000):
            assert subset_size(n, 1.0) == n

    def test_high_precision_oracle_value(self):
        # mpmath (50 digits): 20000**0.8 = 2759.4593..., half-up -> 2759
        assert subset_size(20000, 0.8) == 2759

    def test_half_up_rounding(self):
        # 4**0.5 = 2 exactly; 6**0.5 = 2.449 -> 2; 8**0.5 = 2.83 -> 3
        assert subset_size(4, 0.5) == 2
        assert subset_size(6, 0.5) == 2
        assert subset_size(8, 0.5) == 3

    def test_clamped_to_at_least_two(self):
        assert subset_size(1000, 0.01) == 2

    def test_monotone_in_n_and_gamma(self):
        ns = [10, 100, 1000, 20000]
        gammas = [0.3, 0.5, 0.7, 0.9, 1.0]
        for g in gammas:
            sizes = [subset_size(n, g) for n in ns]
            assert sizes == sorted(sizes)
        for n in ns:
            sizes = [subset_size(n, g) for g in gammas]
            assert sizes == sorted(sizes)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            subset_size(1, 0.5)
        with pytest.raises(ConfigError):
            subset_size(100, 0.0)
        with pytest.raises(ConfigError):
            subset_size(100, 1.5)


class TestDrawSubset:
    def test_full_size_subset_is_whole_index_set(self, small_table):
        idx = draw_subset(small_table, small_table.n, cbrng.substream(5, 1, 0, 0))
        assert list(idx) == list(range(small_table.n))

    def test_indices_distinct_and_sorted(self, dgm_table):
        idx = draw_subset(dgm_table, 50, cbrng.substream(5, 1, 1, 0))
        assert len(set(idx.tolist())) == 50
        assert list(idx) == sorted(idx.tolist())

    def test_same_stream_key_reproduces(self, dgm_table):
        a = draw_subset(dgm_table, 25, cbrng.substream(5, 1, 2, 0))
        b = draw_subset(dgm_table, 25, cbrng.substream(5, 1, 2, 0))
        assert np.array_equal(a, b)

    def test_independent_substreams_differ(self, small_table):
        # pinned regression values for seed 5, n=8, b=4
        a = draw_subset(small_table, 4, cbrng.substream(5, 1, 0, 0))
        b = draw_subset(small_table, 4, cbrng.substream(5, 1, 1, 0))
        assert set(a.tolist()) != set(b.tolist())

    def test_uniformity_binomial_bands(self, small_table):
        # each of 10 indices appears in a b=2 draw w.p. 0.2; over 10000
        # draws the count is Binomial(10000, 0.2): mean 2000, sd 40
        table = ObservationTable(
            y=np.arange(10.0), w=np.tile([0, 1], 5), x=np.zeros((10, 1))
        )
        counts = np.zeros(10)
        stream = cbrng.substream(11, 1, 0, 0)
        for _ in range(10000):
            for i in draw_subset(table, 2, stream):
                counts[i] += 1
        assert (np.abs(counts - 2000) < 5 * 40).all()

    def test_out_of_range(self, small_table):
        with pytest.raises(ConfigError):
            draw_subset(small_table, 1, cbrng.substream(5, 1, 0, 0))
        with pytest.raises(ConfigError):
            draw_subset(small_table, small_table.n + 1, cbrng.substream(5, 1, 0, 0))
