"""
R2Analysis: the estimation pipeline shared by the CLI and the simulation
harness.

    dataset -> center/scale -> MST, MSE -> R² -> SE -> CI -> one-sided z-test
"""
import logging
from typing import Optional

import numpy as np

from config import RunConfig
from data_manager import Dataset, center_scale
from errors import ConfigError, InputError
from loss_estimators import estimate_mse, estimate_mst
from predictors import PredictorSpec
from r2_inference import (
    ESTIMATORS,
    Comparison,
    R2Report,
    compare_r2_across,
    compare_r2_within,
    confidence_interval,
    estimate_rho,
    jackknife_r2_values,
    r2_averaging,
    r2_pooling,
    se_bootstrap,
    se_delta,
    z_test_r2_leq_zero,
)
from resampling import Stream

logger = logging.getLogger(__name__)


def one_sided_p(r2: float, se: float) -> tuple[Optional[float], float]:
    """z-test of R² <= 0 that also settles the se = 0 limit."""
    if se > 0:
        return z_test_r2_leq_zero(r2, se)
    logger.warning("Standard error is 0; the one-sided p-value is degenerate")
    if r2 > 0:
        return None, 0.0
    return None, 0.5 if r2 == 0 else 1.0


class R2Analysis:
    """Runs the full R² estimation and inference stack for one configuration."""

    def __init__(
        self,
        cfg: Optional[RunConfig] = None,
        spec: Optional[PredictorSpec] = None,
        scale_predictors: bool = True,
    ):
        self.cfg = cfg if cfg is not None else RunConfig()
        self.spec = spec if spec is not None else PredictorSpec()
        self.scale_predictors = scale_predictors

    def _prepare(self, dataset: Dataset) -> Dataset:
        self.cfg.check_sample_size(dataset.n)
        prepared, _ = center_scale(dataset, self.scale_predictors)
        return prepared

    def analyze(self, dataset: Dataset, estimator: str = "pooling", outcome: Optional[str] = None) -> R2Report:
        """Estimate R² and, for the pooling estimator, its SE, CI and p-value."""
        if estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got '{estimator}'")
        cfg = self.cfg
        data = self._prepare(dataset)
        stream = Stream(cfg.seed)
        meta = {
            "n": data.n,
            "p": data.p,
            "predictor": self.spec.kind,
            "seed": cfg.seed,
        }
        if outcome is not None:
            meta["outcome"] = outcome

        mst = estimate_mst(data.y)
        if estimator != "pooling":
            source = "train" if estimator == "averaging_train_mst" else "test"
            r2 = r2_averaging(
                data, self.spec, cfg.cv_folds, cfg.cv_repeats,
                mst_source=source, stream=stream.child("mse"), threads=cfg.threads,
            )
            return R2Report(r2=r2, se=None, estimator=estimator, se_method="none", mse=None, mst=mst,
                            alpha=cfg.alpha, meta=meta)

        logger.info("Estimating MSE (%s, %s) for n=%d, p=%d", cfg.mse_method, self.spec.kind, data.n, data.p)
        mse = estimate_mse(data, self.spec, cfg, stream.child("mse"))
        r2 = r2_pooling(mse, mst)

        logger.info("Estimating rho (%s)", cfg.rho_method)
        rho = estimate_rho(data, self.spec, cfg, stream)
        if cfg.se_method == "delta":
            se = se_delta(mse, mst, rho.rho_hat)
        else:
            se = se_bootstrap(rho.table)

        jackknife = None
        if cfg.ci_method == "bca":
            logger.info("Computing jackknife R² values for the BCa acceleration")
            jackknife = jackknife_r2_values(data, self.spec, cfg, stream)
        lower, upper = confidence_interval(r2, se, cfg.alpha, cfg.ci_method, rho.table, jackknife)
        z, p = one_sided_p(r2, se)

        return R2Report(
            r2=r2, se=se, estimator="pooling", se_method=cfg.se_method,
            mse=mse, mst=mst,
            ci_lower=lower, ci_upper=upper, ci_method=cfg.ci_method, alpha=cfg.alpha,
            z=z, p_one_sided=p,
            rho_hat=rho.rho_hat, rho_method=cfg.rho_method, rho_degenerate=rho.degenerate,
            n_replicates=len(rho.table), meta=meta,
        )

    def compare_within(
        self,
        dataset_a: Dataset,
        dataset_b: Dataset,
        outcomes: tuple[Optional[str], Optional[str]] = (None, None),
    ) -> tuple[Comparison, R2Report, R2Report]:
        """Two outcomes measured on the same rows of x."""
        if dataset_a.n != dataset_b.n or not np.array_equal(dataset_a.x, dataset_b.x):
            raise InputError("outcomes are not aligned to the same predictor rows")
        report_a = self.analyze(dataset_a, outcome=outcomes[0])
        report_b = self.analyze(dataset_b, outcome=outcomes[1])
        comparison = compare_r2_within(
            self._prepare(dataset_a), self._prepare(dataset_b), self.spec, self.cfg,
            report_a, report_b, Stream(self.cfg.seed),
        )
        return comparison, report_a, report_b

    @staticmethod
    def compare_across(report_a: R2Report, report_b: R2Report) -> Comparison:
        """Reports from independent datasets."""
        return compare_r2_across(report_a, report_b)
