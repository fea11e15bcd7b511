"""
Out-of-sample R² from MSE and MST estimates, its standard error (delta
method or bootstrap), confidence intervals, z-tests and R² comparisons.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from config import RunConfig
from data_manager import Dataset
from errors import (
    ConfigError,
    DegenerateComparisonError,
    InputError,
    InsufficientReplicatesError,
    NumericalError,
    UndefinedR2Error,
)
from loss_estimators import LossEstimate, cv_errors, estimate_mse, estimate_mst
from predictors import FittedModel, PredictorSpec, train
from resampling import (
    Stream,
    draw_bootstrap_from,
    jackknife_deletions,
    parallel_map,
    parametric_redraw_from,
)

logger = logging.getLogger(__name__)

ESTIMATORS = ("pooling", "averaging_train_mst", "averaging_test_mst")
MIN_INTERVAL_REPLICATES = 20
DELTA_NEGATIVE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Point estimators
# ---------------------------------------------------------------------------
def r2_pooling(mse: LossEstimate, mst: LossEstimate) -> float:
    """1 - MSE/MST with both losses pooled over all held-out samples."""
    if not mst.point > 0:
        raise UndefinedR2Error("zero total variance: R² undefined")
    return 1.0 - mse.point / mst.point


def r2_averaging(
    dataset: Dataset,
    spec: PredictorSpec,
    K: int,
    R: int,
    seed: int = 0,
    mst_source: str = "train",
    stream: Optional[Stream] = None,
    threads: int = 1,
) -> float:
    """
    Mean over repeats and folds of a per-fold R² = 1 - MSE_k / MST_k.

    mst_source="train": the MST formula on the training folds (n = training size)
    mst_source="test":  the left-out fold's empirical variance
    """
    if mst_source not in ("train", "test"):
        raise ConfigError(f"mst_source must be 'train' or 'test', got '{mst_source}'")
    stream = stream if stream is not None else Stream(seed)
    run = cv_errors(dataset, spec, K, R, stream, threads)
    y = dataset.y
    per_fold = []
    for r, plan in enumerate(run.plans):
        for k, train_rows, test_rows in plan.folds():
            if mst_source == "test":
                if test_rows.size < 2:
                    raise ConfigError("averaging with test MST needs at least 2 samples per fold")
                mst_k = float(np.var(y[test_rows], ddof=1))
            else:
                n_tr = train_rows.size
                mst_k = (n_tr + 1) / (n_tr * (n_tr - 1)) * float(np.sum((y[train_rows] - y[train_rows].mean()) ** 2))
            if not mst_k > 0:
                raise UndefinedR2Error(f"zero outcome variance in fold {k} of repeat {r}: R² undefined")
            per_fold.append(1.0 - float(np.mean(run.errors[r, test_rows])) / mst_k)
    return math.fsum(per_fold) / len(per_fold)


# ---------------------------------------------------------------------------
# Replicates and rho
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ReplicateTable:
    """(MSE, MST) estimated on every outer replicate, in replicate-index order."""

    kind: str
    mse: np.ndarray
    mst: np.ndarray

    def __len__(self) -> int:
        return self.mse.shape[0]

    @property
    def r2(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.mst > 0, 1.0 - self.mse / np.where(self.mst > 0, self.mst, 1.0), np.nan)

    def usable_r2(self) -> np.ndarray:
        """Replicate R² values with MST > 0, dropping (and logging) the rest."""
        values = self.r2
        keep = np.isfinite(values)
        dropped = int(np.sum(~keep))
        if dropped:
            logger.warning("Dropped %d replicate(s) with zero MST", dropped)
        return values[keep]


@dataclass(frozen=True)
class RhoEstimate:
    rho_hat: float
    table: ReplicateTable
    degenerate: bool = False


def pearson(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Sample correlation, or None when either column has zero variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(np.clip(np.corrcoef(a, b)[0, 1], -1.0, 1.0))


def _replicate_dataset(
    dataset: Dataset,
    kind: str,
    stream: Stream,
    index: int,
    generator: Optional[FittedModel],
) -> Dataset:
    if kind == "nonparam_boot":
        return dataset.subset(draw_bootstrap_from(stream.child("outer_boot"), dataset.n, index).included)
    if kind == "param_boot":
        return parametric_redraw_from(stream.child("outer_param"), dataset, generator, index)
    return dataset.subset(jackknife_deletions(dataset.n)[index].kept_rows(dataset.n))


def _replicate_losses(
    dataset: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    kind: str,
    stream: Stream,
    generator: Optional[FittedModel],
    index: int,
) -> tuple[float, float]:
    replicate = _replicate_dataset(dataset, kind, stream, index, generator)
    try:
        mst = estimate_mst(replicate.y).point
    except UndefinedR2Error:
        return math.nan, 0.0
    if cfg.mse_method == "cv" and cfg.cv_folds > replicate.n:
        # leave-one-out on n rows becomes leave-one-out on n-1
        cfg = cfg.with_overrides(cv_folds=replicate.n)
    # simple CV on replicates, with as many repeats as on the observed data
    mse = estimate_mse(replicate, spec, cfg, stream.child("replicate_mse", index), nested=False, threads=1).point
    return mse, mst


def replicate_table(
    dataset: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    kind: str,
    stream: Stream,
    generator: Optional[FittedModel] = None,
) -> ReplicateTable:
    """Outer replicates: n_boot_rho bootstraps, or n jackknife deletions."""
    if kind == "param_boot" and generator is None:
        generator = train(spec, dataset, stream.child("param_generator"))
    count = dataset.n if kind == "jackknife" else cfg.n_boot_rho
    losses = parallel_map(
        lambda b: _replicate_losses(dataset, spec, cfg, kind, stream, generator, b),
        range(count),
        cfg.threads,
    )
    mse = np.array([m for m, _ in losses])
    mst = np.array([t for _, t in losses])
    return ReplicateTable(kind, mse, mst)


def estimate_rho(
    dataset: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    stream: Optional[Stream] = None,
    generator: Optional[FittedModel] = None,
) -> RhoEstimate:
    """Correlation between the MSE and MST estimators over outer replicates."""
    if cfg.rho_method == "jackknife" and dataset.n < 3:
        raise InputError("jackknife needs n >= 3")
    stream = stream if stream is not None else Stream(cfg.seed)
    table = replicate_table(dataset, spec, cfg, cfg.rho_method, stream.child("rho"), generator)
    keep = (table.mst > 0) & np.isfinite(table.mse)
    rho = pearson(table.mse[keep], table.mst[keep])
    if rho is None:
        logger.warning("Zero variance in the %s replicate losses; rho set to 0", cfg.rho_method)
        return RhoEstimate(0.0, table, degenerate=True)
    return RhoEstimate(rho, table)


# ---------------------------------------------------------------------------
# Standard errors
# ---------------------------------------------------------------------------
def delta_gradient(mse: float, mst: float) -> np.ndarray:
    """Gradient of 1 - MSE/MST with respect to (MSE, MST)."""
    return np.array([-1.0 / mst, mse / mst ** 2])


def se_delta(mse: LossEstimate, mst: LossEstimate, rho_hat: float) -> float:
    """First-order delta-method SE of 1 - MSE/MST."""
    if not mst.point > 0:
        raise UndefinedR2Error("zero total variance: R² undefined")
    if mse.variance < 0 or mst.variance < 0:
        raise NumericalError("negative loss variance")
    if not -1.0 <= rho_hat <= 1.0:
        raise NumericalError(f"rho must lie in [-1, 1], got {rho_hat}")
    g = delta_gradient(mse.point, mst.point)
    cov = rho_hat * math.sqrt(mse.variance * mst.variance)
    sigma = np.array([[mse.variance, cov], [cov, mst.variance]])
    q = float(g @ sigma @ g)
    if q < -DELTA_NEGATIVE_TOL:
        raise NumericalError(f"delta-method variance is negative ({q:.3g}): inconsistent inputs")
    return math.sqrt(max(q, 0.0))


def se_bootstrap(table: ReplicateTable) -> float:
    """Sample sd (n-1 denominator) of the replicate R² values."""
    values = table.usable_r2()
    if values.shape[0] < 2:
        raise InsufficientReplicatesError(f"bootstrap SE needs >= 2 usable replicates, got {values.shape[0]}")
    return float(np.std(values, ddof=1))


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------
def _quantiles(values: np.ndarray, probs) -> np.ndarray:
    return np.quantile(values, probs, method="linear")


def normal_interval(r2: float, se: float, alpha: float) -> tuple[float, float]:
    if se < 0:
        raise NumericalError(f"negative standard error {se}")
    z = norm.ppf(1.0 - alpha / 2.0)
    return r2 - z * se, min(1.0, r2 + z * se)


def percentile_interval(values: np.ndarray, alpha: float) -> tuple[float, float]:
    if values.shape[0] < MIN_INTERVAL_REPLICATES:
        raise InsufficientReplicatesError(
            f"percentile interval needs >= {MIN_INTERVAL_REPLICATES} replicates, got {values.shape[0]}"
        )
    lo, hi = _quantiles(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), min(1.0, float(hi))


def bca_constants(r2: float, values: np.ndarray, jackknife_values: np.ndarray) -> tuple[float, float]:
    """Bias correction z0 and acceleration a."""
    B = values.shape[0]
    frac = np.sum(values < r2) / B
    # keep z0 finite when every replicate falls on one side
    frac = min(max(frac, 1.0 / (B + 1)), B / (B + 1))
    z0 = float(norm.ppf(frac)) if frac != 0.5 else 0.0
    diffs = np.mean(jackknife_values) - jackknife_values
    denom = 6.0 * np.sum(diffs ** 2) ** 1.5
    a = float(np.sum(diffs ** 3) / denom) if denom > 0 else 0.0
    return z0, a


def bca_interval(
    r2: float,
    values: np.ndarray,
    jackknife_values: np.ndarray,
    alpha: float,
    z0: Optional[float] = None,
    a: Optional[float] = None,
) -> tuple[float, float]:
    if values.shape[0] < MIN_INTERVAL_REPLICATES:
        raise InsufficientReplicatesError(
            f"BCa interval needs >= {MIN_INTERVAL_REPLICATES} replicates, got {values.shape[0]}"
        )
    if z0 is None or a is None:
        z0_hat, a_hat = bca_constants(r2, values, jackknife_values)
        z0 = z0_hat if z0 is None else z0
        a = a_hat if a is None else a
    if z0 == 0.0 and a == 0.0:
        return percentile_interval(values, alpha)
    probs = []
    for q in (alpha / 2.0, 1.0 - alpha / 2.0):
        zq = norm.ppf(q)
        probs.append(norm.cdf(z0 + (z0 + zq) / (1.0 - a * (z0 + zq))))
    lo, hi = _quantiles(values, probs)
    return float(lo), min(1.0, float(hi))


def confidence_interval(
    r2: float,
    se: Optional[float],
    alpha: float,
    method: str = "normal",
    table: Optional[ReplicateTable] = None,
    jackknife_values: Optional[np.ndarray] = None,
) -> tuple[float, float]:
    """Normal, percentile or BCa interval; every upper bound is clipped at 1."""
    if method == "normal":
        if se is None:
            raise NumericalError("normal interval needs a standard error")
        return normal_interval(r2, se, alpha)
    if table is None:
        raise InsufficientReplicatesError(f"{method} interval needs a bootstrap replicate table")
    values = table.usable_r2()
    if method == "percentile":
        return percentile_interval(values, alpha)
    if method == "bca":
        if jackknife_values is None:
            raise InsufficientReplicatesError("BCa interval needs jackknife R² values for the acceleration")
        return bca_interval(r2, values, np.asarray(jackknife_values, dtype=float), alpha)
    raise ConfigError(f"unknown interval method '{method}'")


def jackknife_r2_values(dataset: Dataset, spec: PredictorSpec, cfg: RunConfig, stream: Stream) -> np.ndarray:
    """Leave-one-out R² replicates (simple CV), for the BCa acceleration."""
    table = replicate_table(dataset, spec, cfg, "jackknife", stream.child("bca_jackknife"))
    return table.usable_r2()


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------
def z_test_r2_leq_zero(r2: float, se: float) -> tuple[float, float]:
    """One-sided z-test of H0: R² <= 0."""
    if not se > 0:
        raise NumericalError("z-test needs a positive standard error")
    z = r2 / se
    return z, float(norm.sf(z))


def two_sided_p(z: float) -> float:
    return float(2.0 * norm.sf(abs(z)))


@dataclass(frozen=True)
class Comparison:
    z: float
    p_two_sided: float
    mode: str
    r2_a: float
    r2_b: float
    corr_hat: Optional[float] = None
    corr_degenerate: bool = False

    def cell(self) -> str:
        """Table cell 'z (p)'."""
        p = self.p_two_sided
        p_text = f"{p:.3g}" if p >= 1e-3 else f"{p:.2e}"
        return f"{self.z:.2f} ({p_text})"


def z_test_difference(r2_a: float, r2_b: float, var_a: float, var_b: float, corr: float = 0.0) -> tuple[float, float]:
    """Two-sided z-test of R²_a = R²_b given variances and their correlation."""
    diff = r2_a - r2_b
    if diff == 0.0:
        return 0.0, 1.0
    var = var_a + var_b - 2.0 * corr * math.sqrt(var_a * var_b)
    if not var > 0:
        raise DegenerateComparisonError("degenerate comparison: variance of the R² difference is not positive")
    z = diff / math.sqrt(var)
    return z, two_sided_p(z)


def _require_se(report: "R2Report") -> float:
    if report.se is None:
        raise InputError(f"a {report.estimator} report carries no standard error to compare")
    return report.se


def compare_r2_across(report_a: "R2Report", report_b: "R2Report") -> Comparison:
    """Independent datasets: the difference's variance is the sum of variances."""
    se_a, se_b = _require_se(report_a), _require_se(report_b)
    if se_a == 0 and se_b == 0:
        raise DegenerateComparisonError("degenerate comparison: both standard errors are 0")
    z, p = z_test_difference(report_a.r2, report_b.r2, se_a ** 2, se_b ** 2)
    return Comparison(z, p, "across", report_a.r2, report_b.r2)


def joint_bootstrap_r2(
    dataset_a: Dataset,
    dataset_b: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    stream: Stream,
) -> tuple[np.ndarray, np.ndarray]:
    """R² of both outcomes on the same resampled rows, same fold plans."""
    def one(b: int) -> tuple[float, float]:
        rows = draw_bootstrap_from(stream.child("joint_boot"), dataset_a.n, b).included
        out = []
        for ds in (dataset_a, dataset_b):
            rep = ds.subset(rows)
            try:
                mst = estimate_mst(rep.y).point
            except UndefinedR2Error:
                out.append(math.nan)
                continue
            mse = estimate_mse(rep, spec, cfg, stream.child("joint_mse", b), nested=False, threads=1).point
            out.append(1.0 - mse / mst)
        return out[0], out[1]

    pairs = parallel_map(one, range(cfg.n_boot_rho), cfg.threads)
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def compare_r2_within(
    dataset_a: Dataset,
    dataset_b: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    report_a: "R2Report",
    report_b: "R2Report",
    stream: Optional[Stream] = None,
) -> Comparison:
    """
    Two outcomes on the same rows of x. Cor(R²_a, R²_b) comes from a joint
    row bootstrap; with se_method=bootstrap the same replicates also give
    both SEs.
    """
    if dataset_a.n != dataset_b.n or not np.array_equal(dataset_a.x, dataset_b.x):
        raise InputError("outcomes are not aligned to the same predictor rows")
    stream = stream if stream is not None else Stream(cfg.seed)
    r2_a_b, r2_b_b = joint_bootstrap_r2(dataset_a, dataset_b, spec, cfg, stream.child("within"))
    keep = np.isfinite(r2_a_b) & np.isfinite(r2_b_b)
    corr = pearson(r2_a_b[keep], r2_b_b[keep])
    degenerate = corr is None
    if degenerate:
        logger.warning("Zero variance in joint bootstrap R² replicates; correlation set to 0")
        corr = 0.0

    var_a, var_b = _require_se(report_a) ** 2, _require_se(report_b) ** 2
    if cfg.se_method == "bootstrap" and keep.sum() >= 2:
        var_a = float(np.var(r2_a_b[keep], ddof=1))
        var_b = float(np.var(r2_b_b[keep], ddof=1))
    z, p = z_test_difference(report_a.r2, report_b.r2, var_a, var_b, corr)
    return Comparison(z, p, "within", report_a.r2, report_b.r2, corr_hat=corr, corr_degenerate=degenerate)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class R2Report:
    r2: float
    se: Optional[float]
    estimator: str
    se_method: str
    mse: Optional[LossEstimate]
    mst: LossEstimate
    ci_lower: Optional[float] = None
    ci_upper: Optional[float] = None
    ci_method: Optional[str] = None
    alpha: float = 0.05
    z: Optional[float] = None
    p_one_sided: Optional[float] = None
    rho_hat: Optional[float] = None
    rho_method: Optional[str] = None
    rho_degenerate: bool = False
    n_replicates: int = 0
    meta: dict = field(default_factory=dict)
