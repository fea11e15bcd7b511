import numpy as np
import pytest

from data_manager import Dataset
from errors import ConfigError, NumericalError
from predictors import PredictorSpec, train
from resampling import (
    Stream,
    draw_bootstrap,
    jackknife_deletions,
    make_folds,
    parallel_map,
    parametric_redraw,
)


class TestFolds:
    def test_balanced_and_labelled_from_one(self):
        plan = make_folds(23, 5, seed=1, repeat_index=0)
        assert sorted(set(plan.assignments.tolist())) == [1, 2, 3, 4, 5]
        sizes = plan.sizes()
        assert sizes.sum() == 23
        assert sizes.max() - sizes.min() <= 1

    def test_deterministic_per_seed_and_repeat(self):
        a = make_folds(30, 10, seed=5, repeat_index=3)
        b = make_folds(30, 10, seed=5, repeat_index=3)
        c = make_folds(30, 10, seed=5, repeat_index=4)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_train_and_test_rows_partition(self):
        plan = make_folds(12, 4, seed=0, repeat_index=0)
        for k, train_rows, test_rows in plan.folds():
            assert np.intersect1d(train_rows, test_rows).size == 0
            assert train_rows.size + test_rows.size == 12

    def test_leave_one_out(self):
        plan = make_folds(6, 6, seed=0, repeat_index=0)
        assert plan.sizes().tolist() == [1] * 6

    @pytest.mark.parametrize("n,K", [(5, 1), (4, 5)])
    def test_invalid_fold_counts(self, n, K):
        with pytest.raises(ConfigError):
            make_folds(n, K, seed=0, repeat_index=0)


class TestBootstrap:
    def test_counts_sum_to_n(self):
        draw = draw_bootstrap(50, seed=9, draw_index=2)
        assert draw.counts.sum() == 50
        assert draw.included.shape == (50,)
        np.testing.assert_array_equal(draw.excluded_mask, draw.counts == 0)

    def test_deterministic(self):
        a = draw_bootstrap(50, seed=9, draw_index=2)
        b = draw_bootstrap(50, seed=9, draw_index=2)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_inclusion_frequency(self):
        n = 50
        included = np.mean([(draw_bootstrap(n, seed=4, draw_index=b).counts > 0).mean() for b in range(10_000)])
        assert included == pytest.approx(1.0 - (1.0 - 1.0 / n) ** n, abs=0.01)

    def test_draw_indices_give_different_counts(self):
        draws = [draw_bootstrap(20, seed=0, draw_index=b).counts for b in range(100)]
        assert any(not np.array_equal(draws[0], d) for d in draws[1:])


def test_jackknife_deletions():
    deletions = jackknife_deletions(4)
    assert [d.left_out_index for d in deletions] == [0, 1, 2, 3]
    np.testing.assert_array_equal(deletions[2].kept_rows(4), [0, 1, 3])


def test_streams_are_independent_by_tag_and_index():
    root = Stream(3)
    a = root.child("folds", 0).generator().random(4)
    b = root.child("folds", 1).generator().random(4)
    c = root.child("bootstrap", 0).generator().random(4)
    again = Stream(3).child("folds", 0).generator().random(4)
    np.testing.assert_array_equal(a, again)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)


class FixedGenerator:
    def __init__(self, mu, sigma2):
        self.mu = np.asarray(mu, dtype=float)
        self.residual_variance = sigma2

    def conditional_mean(self, x):
        return self.mu


class TestParametricRedraw:
    def test_keeps_x_and_redraws_y(self, linear_dataset):
        model = train(PredictorSpec(), linear_dataset)
        redrawn = parametric_redraw(linear_dataset, model, seed=0, draw_index=0)
        np.testing.assert_array_equal(redrawn.x, linear_dataset.x)
        assert not np.array_equal(redrawn.y, linear_dataset.y)
        again = parametric_redraw(linear_dataset, model, seed=0, draw_index=0)
        np.testing.assert_array_equal(redrawn.y, again.y)

    def test_zero_residual_variance_is_an_error(self):
        x = np.arange(10.0).reshape(-1, 1)
        d = Dataset(np.full(10, 3.0), x)
        model = train(PredictorSpec(kind="mean_only"), d)
        with pytest.raises(NumericalError, match="residual variance"):
            parametric_redraw(d, model, seed=0, draw_index=0)

    def test_vanishing_noise_reproduces_the_mean(self):
        mu = np.array([1.0, -2.0, 0.5, 3.0])
        d = Dataset(np.zeros(4), np.eye(4))
        redrawn = parametric_redraw(d, FixedGenerator(mu, 1e-12), seed=1, draw_index=0)
        np.testing.assert_allclose(redrawn.y, mu, atol=1e-5)

    def test_mean_of_redraws(self):
        mu, sigma2 = np.array([1.5, -0.5, 2.0]), 4.0
        d = Dataset(np.zeros(3), np.arange(3.0).reshape(-1, 1))
        gen = FixedGenerator(mu, sigma2)
        first = [parametric_redraw(d, gen, seed=2, draw_index=b).y[0] for b in range(10_000)]
        assert abs(np.mean(first) - mu[0]) <= 3.0 * np.sqrt(sigma2) / 100


def test_parallel_map_keeps_order_for_any_thread_count():
    items = list(range(-10, 10))
    assert parallel_map(abs, items, threads=1) == parallel_map(abs, items, threads=4)
    assert parallel_map(abs, items, threads=4) == [abs(i) for i in items]
