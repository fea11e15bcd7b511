import numpy as np
import pytest

from data_manager import Dataset, center_scale, load_csv, load_outcomes, write_csv
from errors import IngestionError


class TestLoadCsv:
    def test_header_and_named_outcome(self, tiny_csv):
        d = load_csv(str(tiny_csv), outcome_column="y")
        assert d.n == 6
        assert d.p == 2
        assert d.feature_names == ("x1", "x2")
        np.testing.assert_array_equal(d.y, [1.5, 2.0, 3.5, 4.0, 5.5, 6.0])
        np.testing.assert_array_equal(d.x[:, 1], [2, 1, 0, 3, 1, 2])

    def test_outcome_by_index_keeps_file_order(self, tiny_csv):
        d = load_csv(str(tiny_csv), outcome_column=2)
        np.testing.assert_array_equal(d.y, [2, 1, 0, 3, 1, 2])
        assert d.feature_names == ("y", "x1")

    def test_headerless_file(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("1,2\n2,4\n3,7\n", encoding="utf-8")
        d = load_csv(str(path))
        np.testing.assert_array_equal(d.y, [1, 2, 3])
        np.testing.assert_array_equal(d.x[:, 0], [2, 4, 7])

    def test_several_outcomes_share_predictors(self, tiny_csv):
        d_a, d_b = load_outcomes(str(tiny_csv), ["y", "x2"])
        np.testing.assert_array_equal(d_a.x, d_b.x)
        assert d_a.feature_names == ("x1",)

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,x1\n1,2\n2,abc\n3,4\n", encoding="utf-8")
        with pytest.raises(IngestionError) as e:
            load_csv(str(path), "y")
        assert e.value.row == 3
        assert e.value.column == "x1"

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "missing.csv"
        path.write_text("y,x1\n1,2\n2,\n3,4\n", encoding="utf-8")
        with pytest.raises(IngestionError, match="missing"):
            load_csv(str(path), "y")

    def test_missing_cell_in_headerless_first_row(self, tmp_path):
        path = tmp_path / "na.csv"
        path.write_text("NA,1\n2,3\n3,5\n4,6\n", encoding="utf-8")
        with pytest.raises(IngestionError) as e:
            load_csv(str(path))
        assert e.value.row == 1
        assert e.value.column == "0"

    def test_too_few_rows(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("y,x1\n1,2\n2,3\n", encoding="utf-8")
        with pytest.raises(IngestionError, match="dataset too small"):
            load_csv(str(path), "y")

    def test_unknown_outcome(self, tiny_csv):
        with pytest.raises(IngestionError, match="not found"):
            load_csv(str(tiny_csv), "height")

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="file not found"):
            load_csv(str(tmp_path / "nope.csv"))


def test_write_then_load_is_lossless(tmp_path):
    rng = np.random.default_rng(3)
    d = Dataset(rng.standard_normal(10) / 3.0, rng.standard_normal((10, 3)) * 1e-7)
    path = write_csv(d, str(tmp_path / "out.csv"))
    back = load_csv(path, "y")
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.x, d.x)


class TestDataset:
    def test_arrays_are_read_only(self, linear_dataset):
        with pytest.raises(ValueError):
            linear_dataset.y[0] = 1.0

    def test_rejects_non_finite(self):
        with pytest.raises(IngestionError):
            Dataset(np.array([1.0, np.nan, 2.0]), np.zeros((3, 1)))

    def test_rejects_misaligned_rows(self):
        with pytest.raises(IngestionError):
            Dataset(np.arange(4.0), np.zeros((3, 1)))

    def test_subset_repeats_rows(self, linear_dataset):
        sub = linear_dataset.subset(np.array([0, 0, 5]))
        assert sub.n == 3
        assert sub.y[0] == sub.y[1] == linear_dataset.y[0]


class TestCenterScale:
    def test_center_and_scale(self, linear_dataset):
        d, transform = center_scale(linear_dataset)
        np.testing.assert_allclose(d.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(d.x.std(axis=0, ddof=1), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(d.y, linear_dataset.y)
        np.testing.assert_allclose(transform.apply(linear_dataset.x), d.x)

    def test_center_only(self, linear_dataset):
        d, transform = center_scale(linear_dataset, scale_predictors=False)
        np.testing.assert_array_equal(transform.scales, 1.0)
        np.testing.assert_allclose(d.x.std(axis=0, ddof=1), linear_dataset.x.std(axis=0, ddof=1))

    def test_zero_variance_column_is_flagged_not_scaled(self):
        x = np.column_stack([np.full(5, 3.0), np.arange(5.0)])
        d, transform = center_scale(Dataset(np.arange(5.0), x))
        assert transform.zero_variance.tolist() == [True, False]
        assert transform.scales[0] == 1.0
        np.testing.assert_array_equal(d.x[:, 0], 0.0)
