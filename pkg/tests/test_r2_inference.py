import math

import numpy as np
import pytest
from scipy.stats import norm

from data_manager import Dataset
from errors import (
    ConfigError,
    DegenerateComparisonError,
    InputError,
    InsufficientReplicatesError,
    NumericalError,
    UndefinedR2Error,
)
from loss_estimators import LossEstimate, estimate_mse_cv, estimate_mst
from predictors import PredictorSpec
from r2_inference import (
    Comparison,
    R2Report,
    ReplicateTable,
    bca_constants,
    bca_interval,
    compare_r2_across,
    compare_r2_within,
    confidence_interval,
    delta_gradient,
    estimate_rho,
    jackknife_r2_values,
    normal_interval,
    pearson,
    percentile_interval,
    r2_averaging,
    r2_pooling,
    se_bootstrap,
    se_delta,
    z_test_difference,
    z_test_r2_leq_zero,
)
from resampling import Stream

OLS = PredictorSpec()


def loss(point, variance=0.0, method="cv"):
    return LossEstimate(point=point, variance=variance, method=method)


def report(r2, se, estimator="pooling"):
    return R2Report(r2=r2, se=se, estimator=estimator, se_method="delta", mse=None, mst=loss(1.0, method="mst"))


class TestPooling:
    @pytest.mark.parametrize("mse,expected", [(0.0, 1.0), (1.5, 0.0), (3.0, -1.0)])
    def test_values(self, mse, expected):
        assert r2_pooling(loss(mse), loss(1.5)) == pytest.approx(expected)

    def test_zero_mst(self):
        with pytest.raises(UndefinedR2Error):
            r2_pooling(loss(1.0), loss(0.0))

    def test_invariant_to_outcome_scale(self, linear_dataset):
        scaled = linear_dataset.with_outcome(3.0 * linear_dataset.y)
        results = []
        for d in (linear_dataset, scaled):
            mse = estimate_mse_cv(d, OLS, K=5, R=2, seed=4)
            mst = estimate_mst(d.y)
            results.append((r2_pooling(mse, mst), se_delta(mse, mst, 0.3)))
        assert results[0][0] == pytest.approx(results[1][0], abs=1e-10)
        assert results[0][1] == pytest.approx(results[1][1], abs=1e-10)


class TestAveraging:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((30, 1))
        d = Dataset(2.0 * x[:, 0], x)
        for source in ("train", "test"):
            assert r2_averaging(d, OLS, K=5, R=2, seed=1, mst_source=source) == pytest.approx(1.0)

    def test_mean_only_with_train_mst_is_not_positive_on_average(self):
        mean_only = PredictorSpec(kind="mean_only")
        values = []
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            d = Dataset(rng.standard_normal(30), rng.standard_normal((30, 1)))
            values.append(r2_averaging(d, mean_only, K=10, R=1, seed=seed, mst_source="train"))
        assert np.mean(values) < 0.05

    def test_test_mst_needs_two_samples_per_fold(self, linear_dataset):
        with pytest.raises(ConfigError, match="2 samples per fold"):
            r2_averaging(linear_dataset, OLS, K=40, R=1, mst_source="test")

    def test_unknown_source(self, linear_dataset):
        with pytest.raises(ConfigError):
            r2_averaging(linear_dataset, OLS, K=5, R=1, mst_source="both")


class TestRho:
    def test_pearson(self):
        assert pearson(np.array([1.0, 2, 3]), np.array([1.0, 2, 3])) == pytest.approx(1.0)
        assert pearson(np.array([1.0, 2]), np.array([2.0, 1])) == pytest.approx(-1.0)
        assert pearson(np.array([1.0, 1, 1]), np.array([1.0, 2, 3])) is None

    def test_jackknife(self, linear_dataset, fast_cfg):
        rho = estimate_rho(linear_dataset, OLS, fast_cfg)
        assert len(rho.table) == 40
        assert -1.0 <= rho.rho_hat <= 1.0
        assert not rho.degenerate

    @pytest.mark.parametrize("method", ["nonparam_boot", "param_boot"])
    def test_bootstrap_is_deterministic(self, linear_dataset, fast_cfg, method):
        cfg = fast_cfg.with_overrides(rho_method=method)
        a = estimate_rho(linear_dataset, OLS, cfg)
        b = estimate_rho(linear_dataset, OLS, cfg.with_overrides(threads=2))
        assert len(a.table) == 10
        assert a.rho_hat == b.rho_hat
        np.testing.assert_array_equal(a.table.mse, b.table.mse)


class TestDeltaSE:
    def test_independent_losses(self):
        assert se_delta(loss(1.0, 0.04), loss(2.0, 0.08), 0.0) == pytest.approx(0.12247, abs=1e-5)

    def test_positive_correlation_shrinks_se(self):
        assert se_delta(loss(1.0, 0.04), loss(2.0, 0.08), 1.0) == pytest.approx(0.02929, abs=1e-5)

    def test_zero_variances(self):
        assert se_delta(loss(1.0, 0.0), loss(2.0, 0.0), 0.5) == 0.0

    def test_fixed_mst_reduces_to_scaled_mse_se(self):
        assert se_delta(loss(0.7, 0.09), loss(1.2, 0.0), 0.4) == pytest.approx(0.3 / 1.2, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        mse, mst, h = 0.8, 1.7, 1e-6
        f = lambda a, b: 1.0 - a / b
        numeric = [(f(mse + h, mst) - f(mse - h, mst)) / (2 * h), (f(mse, mst + h) - f(mse, mst - h)) / (2 * h)]
        np.testing.assert_allclose(delta_gradient(mse, mst), numeric, rtol=1e-6)

    def test_rho_out_of_range(self):
        with pytest.raises(NumericalError):
            se_delta(loss(1.0, 0.04), loss(2.0, 0.08), 1.5)


class TestBootstrapSE:
    def test_constant_replicates(self):
        assert se_bootstrap(ReplicateTable("nonparam_boot", np.full(3, 0.5), np.ones(3))) == 0.0

    def test_two_replicates(self):
        table = ReplicateTable("nonparam_boot", np.array([1.0, 0.0]), np.ones(2))
        assert se_bootstrap(table) == pytest.approx(math.sqrt(0.5))

    def test_zero_mst_replicates_are_dropped(self):
        table = ReplicateTable("nonparam_boot", np.array([np.nan, 1.0, 0.0]), np.array([0.0, 1.0, 1.0]))
        assert se_bootstrap(table) == pytest.approx(math.sqrt(0.5))
        with pytest.raises(InsufficientReplicatesError):
            se_bootstrap(ReplicateTable("nonparam_boot", np.array([np.nan, 1.0]), np.array([0.0, 1.0])))


class TestIntervals:
    def test_normal(self):
        lo, hi = normal_interval(0.72, 0.07, 0.05)
        assert (round(lo, 2), round(hi, 2)) == (0.58, 0.86)
        assert hi - lo == pytest.approx(2 * norm.ppf(0.975) * 0.07)

    def test_normal_clips_only_the_upper_bound(self):
        lo, hi = normal_interval(0.99, 0.05, 0.05)
        assert hi == 1.0
        lo, _ = normal_interval(-3.0, 1.0, 0.05)
        assert lo < -4.0

    def test_percentile(self):
        values = np.round(np.arange(21) * 0.05, 10)
        lo, hi = percentile_interval(values, 0.1)
        assert lo == pytest.approx(0.05)
        assert hi == pytest.approx(0.95)

    def test_percentile_needs_twenty_replicates(self):
        with pytest.raises(InsufficientReplicatesError):
            percentile_interval(np.linspace(0, 1, 11), 0.1)

    def test_bca_without_correction_is_percentile(self):
        values = np.random.default_rng(0).normal(0.4, 0.1, 200)
        jack = np.linspace(0.3, 0.5, 30)
        assert bca_interval(0.4, values, jack, 0.05, z0=0.0, a=0.0) == percentile_interval(values, 0.05)

    def test_bca_constants_stay_finite(self):
        values = np.linspace(0.0, 0.5, 40)
        z0, a = bca_constants(0.9, values, np.linspace(0.8, 0.9, 10))
        assert np.isfinite(z0) and z0 > 0
        assert a == pytest.approx(0.0, abs=1e-12)

    def test_bca_shifts_toward_the_bias(self):
        values = np.random.default_rng(1).normal(0.5, 0.1, 500)
        jack = np.random.default_rng(2).normal(0.5, 0.01, 40)
        lo_bca, hi_bca = bca_interval(0.55, values, jack, 0.1)
        lo_pct, hi_pct = percentile_interval(values, 0.1)
        assert lo_bca > lo_pct
        assert hi_bca > hi_pct

    def test_dispatch(self):
        table = ReplicateTable("nonparam_boot", np.linspace(0, 1, 25), np.ones(25))
        assert confidence_interval(0.5, 0.1, 0.05, "normal") == normal_interval(0.5, 0.1, 0.05)
        assert confidence_interval(0.5, None, 0.1, "percentile", table=table) == percentile_interval(table.r2, 0.1)
        with pytest.raises(InsufficientReplicatesError):
            confidence_interval(0.5, 0.1, 0.05, "percentile")
        with pytest.raises(InsufficientReplicatesError):
            confidence_interval(0.5, 0.1, 0.05, "bca", table=table)

    def test_jackknife_values(self, linear_dataset, fast_cfg):
        values = jackknife_r2_values(linear_dataset, OLS, fast_cfg, Stream(1))
        assert values.shape == (40,)
        assert np.all(values < 1.0)


class TestZTest:
    def test_strong_signal(self):
        z, p = z_test_r2_leq_zero(0.72, 0.07)
        assert z == pytest.approx(10.2857, abs=1e-4)
        assert 1e-26 < p < 1e-23

    def test_zero_r2(self):
        assert z_test_r2_leq_zero(0.0, 0.3) == (0.0, 0.5)

    def test_negative_r2(self):
        _, p = z_test_r2_leq_zero(-0.02, 0.17)
        assert p == pytest.approx(0.546, abs=1e-3)

    def test_p_decreases_with_r2(self):
        ps = [z_test_r2_leq_zero(r2, 0.1)[1] for r2 in np.linspace(-0.5, 0.5, 11)]
        assert all(a > b for a, b in zip(ps, ps[1:]))
        assert all(0.0 <= p <= 1.0 for p in ps)

    def test_needs_positive_se(self):
        with pytest.raises(NumericalError):
            z_test_r2_leq_zero(0.3, 0.0)


class TestComparisons:
    def test_across(self):
        c = compare_r2_across(report(0.72, 0.07), report(0.49, 0.21))
        assert c.z == pytest.approx(1.039, abs=1e-3)
        assert c.p_two_sided == pytest.approx(0.30, abs=0.005)
        assert c.mode == "across"

    def test_across_significant(self):
        c = compare_r2_across(report(0.72, 0.07), report(-0.01, 0.15))
        assert c.z == pytest.approx(4.41, abs=0.005)
        assert 5e-6 < c.p_two_sided < 2e-5

    def test_equal_reports(self):
        c = compare_r2_across(report(0.5, 0.1), report(0.5, 0.1))
        assert (c.z, c.p_two_sided) == (0.0, 1.0)

    def test_both_se_zero(self):
        with pytest.raises(DegenerateComparisonError):
            compare_r2_across(report(0.5, 0.0), report(0.4, 0.0))

    def test_report_without_se(self):
        with pytest.raises(InputError):
            compare_r2_across(report(0.5, None, "averaging_train_mst"), report(0.4, 0.1))

    def test_perfectly_correlated_equal_variances(self):
        with pytest.raises(DegenerateComparisonError, match="degenerate comparison"):
            z_test_difference(0.6, 0.5, 0.01, 0.01, corr=1.0)

    def test_correlation_shrinks_the_denominator(self):
        z_ind, _ = z_test_difference(0.6, 0.5, 0.01, 0.01)
        z_cor, _ = z_test_difference(0.6, 0.5, 0.01, 0.01, corr=0.5)
        assert z_cor == pytest.approx(z_ind * math.sqrt(2.0))

    def test_cell(self):
        assert Comparison(-2.98, 0.0029, "within", 0.5, 0.7).cell() == "-2.98 (0.0029)"
        assert Comparison(5.0, 5.7e-7, "within", 0.5, 0.1).cell() == "5.00 (5.70e-07)"

    def test_within_self_comparison(self, linear_dataset, fast_cfg):
        cfg = fast_cfg.with_overrides(rho_method="nonparam_boot")
        r = report(0.8, 0.05)
        c = compare_r2_within(linear_dataset, linear_dataset, OLS, cfg, r, r)
        assert (c.z, c.p_two_sided) == (0.0, 1.0)
        assert c.corr_hat == pytest.approx(1.0)

    def test_within_uses_joint_bootstrap_correlation(self, linear_dataset, fast_cfg):
        cfg = fast_cfg.with_overrides(rho_method="nonparam_boot", se_method="bootstrap")
        noisy = linear_dataset.with_outcome(linear_dataset.y + np.random.default_rng(0).standard_normal(40))
        c = compare_r2_within(linear_dataset, noisy, OLS, cfg, report(0.9, 0.03), report(0.6, 0.1))
        assert -1.0 <= c.corr_hat <= 1.0
        assert c.z > 0
        assert 0.0 <= c.p_two_sided <= 1.0

    def test_within_needs_aligned_rows(self, linear_dataset, noise_dataset, fast_cfg):
        with pytest.raises(InputError, match="aligned"):
            compare_r2_within(linear_dataset, noise_dataset, OLS, fast_cfg, report(0.5, 0.1), report(0.4, 0.1))
