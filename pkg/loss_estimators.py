"""
Point and variance estimates of the two squared-error losses an out-of-sample
R² compares:

    MST  the null model's expected error, analytic:  (n+1)/(n(n-1)) * sum (y - ybar)^2
    MSE  the model's expected error, by repeated K-fold CV (simple or nested)
         or by the .632 bootstrap
"""
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from config import RunConfig
from data_manager import Dataset
from errors import ConfigError, InputError, NumericalError, OOSR2Error, TrainingError, UndefinedR2Error
from predictors import PredictorSpec, train
from resampling import FoldPlan, Stream, draw_bootstrap_from, make_folds_from, parallel_map

logger = logging.getLogger(__name__)

EXP_M1 = math.exp(-1.0)
REDRAW_FACTOR = 10


@dataclass(frozen=True)
class LossEstimate:
    """A loss point estimate, the variance of that estimator, and bookkeeping."""

    point: float
    variance: float
    method: str
    settings: dict = field(default_factory=dict)
    per_sample_errors: Optional[np.ndarray] = None
    fold_errors: Optional[np.ndarray] = None
    raw_point: Optional[float] = None
    simple_point: Optional[float] = None
    bias_correction: Optional[float] = None
    inflation: Optional[float] = None
    n_redrawn: int = 0

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def summary(self) -> dict:
        out = {"point": self.point, "variance": self.variance, "method": self.method, **self.settings}
        for key in ("raw_point", "simple_point", "bias_correction", "inflation"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.n_redrawn:
            out["n_redrawn"] = self.n_redrawn
        return out


def _mean(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values) / values.shape[0]


# ---------------------------------------------------------------------------
# MST
# ---------------------------------------------------------------------------
def estimate_mst(y: np.ndarray) -> LossEstimate:
    """Unbiased estimate of (n+1)/n * Var(Y) with Var = 2/(n-1) * MST^2."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 3:
        raise InputError(f"dataset too small: MST needs n >= 3, got {n}")
    if np.ptp(y) == 0:
        raise UndefinedR2Error("zero total variance: R² undefined")
    ss = math.fsum((y - _mean(y)) ** 2)
    point = (n + 1) / (n * (n - 1)) * ss
    return LossEstimate(point=point, variance=2.0 / (n - 1) * point ** 2, method="mst", settings={"n": n})


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CVRun:
    """Squared held-out errors of every repeat (R x n) and the fold plans used."""

    errors: np.ndarray
    plans: list[FoldPlan]

    @property
    def repeats(self) -> int:
        return len(self.plans)

    def fold_means(self) -> np.ndarray:
        """R x K matrix of per-fold mean errors."""
        out = np.zeros((self.repeats, self.plans[0].K))
        for r, plan in enumerate(self.plans):
            for k in range(1, plan.K + 1):
                out[r, k - 1] = _mean(self.errors[r, plan.test_rows(k)])
        return out


def _fit_and_score(
    dataset: Dataset,
    spec: PredictorSpec,
    train_rows: np.ndarray,
    test_rows: np.ndarray,
    stream: Stream,
    repeat: Optional[int] = None,
    fold: Optional[int] = None,
) -> np.ndarray:
    """Squared errors on test_rows of a model trained on train_rows."""
    try:
        model = train(spec, dataset.subset(train_rows), stream)
    except OOSR2Error as e:
        raise TrainingError(f"training failed: {e}", repeat=repeat, fold=fold) from e
    resid = dataset.y[test_rows] - model.predict(dataset.x[test_rows])
    return resid ** 2


def _repeat_errors(dataset: Dataset, spec: PredictorSpec, stream: Stream, plan: FoldPlan) -> np.ndarray:
    errors = np.empty(dataset.n)
    for k, train_rows, test_rows in plan.folds():
        if test_rows.size < 1:
            raise ConfigError(f"fold {k} of repeat {plan.repeat_index} is empty")
        errors[test_rows] = _fit_and_score(
            dataset, spec, train_rows, test_rows,
            stream.child("train", plan.repeat_index, k), plan.repeat_index, k,
        )
    return errors


def cv_errors(
    dataset: Dataset,
    spec: PredictorSpec,
    K: int,
    R: int,
    stream: Stream,
    threads: int = 1,
) -> CVRun:
    """Run R repeats of K-fold CV; fold plans hang off stream."""
    if K > dataset.n:
        raise ConfigError(f"cv_folds={K} exceeds the sample size n={dataset.n}")
    plans = [make_folds_from(stream.child("cv"), dataset.n, K, r) for r in range(R)]
    rows = parallel_map(partial(_repeat_errors, dataset, spec, stream), plans, threads)
    return CVRun(np.vstack(rows), plans)


def _nested_pivots(dataset: Dataset, spec: PredictorSpec, stream: Stream, plan: FoldPlan, outer: np.ndarray):
    """
    For every outer fold k: an inner CV over the K-1 remaining folds.
    Returns the pivots (mean(e_in) - mean(e_out), var(e_out)/|fold k|) and
    every inner held-out error.
    """
    pivots = np.zeros((plan.K, 2))
    inner_all = []
    for k in range(1, plan.K + 1):
        out_rows = plan.test_rows(k)
        if out_rows.size < 2:
            raise ConfigError("nested CV needs at least 2 samples per fold")
        e_out = outer[out_rows]
        e_in = []
        for k2 in range(1, plan.K + 1):
            if k2 == k:
                continue
            test_rows = plan.test_rows(k2)
            train_rows = np.flatnonzero((plan.assignments != k) & (plan.assignments != k2))
            e_in.append(_fit_and_score(
                dataset, spec, train_rows, test_rows,
                stream.child("nested_train", plan.repeat_index, k, k2), plan.repeat_index, k,
            ))
        e_in = np.concatenate(e_in)
        pivots[k - 1, 0] = _mean(e_in) - _mean(e_out)
        pivots[k - 1, 1] = np.var(e_out, ddof=1) / out_rows.size
        inner_all.append(e_in)
    return pivots, np.concatenate(inner_all)


def estimate_mse_cv(
    dataset: Dataset,
    spec: PredictorSpec,
    K: int,
    R: int,
    seed: int = 0,
    nested: bool = True,
    stream: Optional[Stream] = None,
    threads: int = 1,
) -> LossEstimate:
    """
    Repeated K-fold CV estimate of the out-of-sample MSE.

    The point pools the squared errors over samples, then averages over
    repeats. With nested set, the variance comes from an inner CV over the
    K-1 remaining folds of each outer fold, and the point is corrected for
    training on n(K-1)/K rows instead of n; the plain pooled estimate stays
    available as simple_point.
    """
    if nested and K < 3:
        raise ConfigError(f"nested CV needs K >= 3 folds, got K={K}")
    stream = stream if stream is not None else Stream(seed)
    run = cv_errors(dataset, spec, K, R, stream, threads)
    n = dataset.n
    simple_point = _mean(run.errors)
    per_sample = run.errors.mean(axis=0)
    settings = {"K": K, "R": R, "nested": nested, "predictor": spec.kind}

    if not nested:
        # naive: held-out errors treated as independent
        variance = float(np.var(run.errors.ravel(), ddof=1)) / n
        return LossEstimate(
            point=simple_point, variance=variance, method="cv", settings=settings,
            per_sample_errors=per_sample, fold_errors=run.fold_means(), simple_point=simple_point,
        )

    tasks = list(zip(run.plans, run.errors))
    results = parallel_map(
        lambda task: _nested_pivots(dataset, spec, stream, task[0], task[1]), tasks, threads,
    )
    pivots = np.vstack([r[0] for r in results])
    inner = np.concatenate([r[1] for r in results])

    raw_point = _mean(inner)
    mse_of_mean = _mean(pivots[:, 0] ** 2) - _mean(pivots[:, 1])
    sd_inner = float(np.std(inner, ddof=1))
    n_sub = math.floor(n * (K - 1) / K)
    if sd_inner > 0:
        inflation = math.sqrt(max(0.0, mse_of_mean)) / (sd_inner / math.sqrt(n_sub))
    else:
        inflation = 1.0
    inflation = min(max(inflation, 1.0), math.sqrt(K))
    variance = (sd_inner / math.sqrt(n) * inflation) ** 2

    bias_correction = (raw_point - simple_point) * (1.0 + ((K - 2) / K) ** 1.5)
    point = max(0.0, raw_point - bias_correction)
    logger.debug(
        "Nested CV: raw %.5g, simple %.5g, corrected %.5g, inflation %.3f",
        raw_point, simple_point, point, inflation,
    )
    return LossEstimate(
        point=point, variance=variance, method="cv", settings=settings,
        per_sample_errors=per_sample, fold_errors=run.fold_means(),
        raw_point=raw_point, simple_point=simple_point,
        bias_correction=bias_correction, inflation=inflation,
    )


# ---------------------------------------------------------------------------
# .632 bootstrap
# ---------------------------------------------------------------------------
def _oob_errors(dataset: Dataset, spec: PredictorSpec, stream: Stream, b: int) -> tuple[np.ndarray, np.ndarray]:
    draw = draw_bootstrap_from(stream.child("boot632"), dataset.n, b)
    excluded = np.flatnonzero(draw.excluded_mask)
    errors = np.zeros(dataset.n)
    if excluded.size:
        errors[excluded] = _fit_and_score(
            dataset, spec, draw.included, excluded, stream.child("boot632_train", b), fold=b,
        )
    return np.asarray(draw.counts), errors


def _mix632(in_part: np.ndarray, oob_part: np.ndarray) -> np.ndarray:
    return EXP_M1 * np.asarray(in_part) + (1.0 - EXP_M1) * np.asarray(oob_part)


def boot632_point(in_sample: np.ndarray, oob_mean: np.ndarray) -> float:
    """exp(-1) * mean in-sample error + (1 - exp(-1)) * mean out-of-bag error."""
    return _mean(_mix632(in_sample, oob_mean))


def estimate_mse_boot632(
    dataset: Dataset,
    spec: PredictorSpec,
    B: int,
    seed: int = 0,
    stream: Optional[Stream] = None,
    threads: int = 1,
) -> LossEstimate:
    """
    Plain .632 bootstrap estimate of the out-of-sample MSE.

    Draws beyond B are added (up to 10 B) until every sample has been out of
    bag at least once. The variance is the squared influence-function SE of
    the leave-one-out bootstrap error, mixed with the in-sample term's
    influence by the same .632 weights.
    """
    if B < 1:
        raise ConfigError(f"need B >= 1 bootstrap draws, got {B}")
    stream = stream if stream is not None else Stream(seed)
    n = dataset.n

    full_model = train(spec, dataset, stream.child("boot632_full"))
    in_sample = (dataset.y - full_model.predict(dataset.x)) ** 2

    draws = parallel_map(lambda b: _oob_errors(dataset, spec, stream, b), range(B), threads)
    counts = np.vstack([d[0] for d in draws])
    oob = np.vstack([d[1] for d in draws])
    next_b = B
    while np.any((counts == 0).sum(axis=0) == 0) and next_b < REDRAW_FACTOR * B:
        c, e = _oob_errors(dataset, spec, stream, next_b)
        counts = np.vstack([counts, c])
        oob = np.vstack([oob, e])
        next_b += 1
    excluded = counts == 0
    n_out = excluded.sum(axis=0)
    if np.any(n_out == 0):
        raise NumericalError(
            f"{int(np.sum(n_out == 0))} sample(s) never out of bag after {next_b} draws; use a larger B"
        )
    if next_b > B:
        logger.warning(".632 bootstrap: drew %d extra replicate(s) to cover every sample", next_b - B)

    oob_mean = (excluded * oob).sum(axis=0) / n_out
    per_sample = _mix632(in_sample, oob_mean)
    point = boot632_point(in_sample, oob_mean)

    # influence functions
    n_draws = counts.shape[0]
    err1 = _mean(oob_mean)
    q_b = (excluded * oob).sum(axis=1) / n
    e_n = (1.0 - 1.0 / n) ** (-n)
    centered_counts = counts - counts.mean(axis=0)
    d_loo = (2.0 + 1.0 / (n - 1)) * (oob_mean - err1) / n + e_n * (centered_counts.T @ q_b) / n_draws
    d_in = (in_sample - _mean(in_sample)) / n
    d_632 = _mix632(d_in, d_loo)
    variance = math.fsum(d_632 ** 2)

    return LossEstimate(
        point=point, variance=variance, method="boot632",
        settings={"B": B, "predictor": spec.kind},
        per_sample_errors=per_sample, n_redrawn=next_b - B,
    )


def estimate_mse(
    dataset: Dataset,
    spec: PredictorSpec,
    cfg: RunConfig,
    stream: Stream,
    nested: Optional[bool] = None,
    threads: Optional[int] = None,
) -> LossEstimate:
    """Dispatch on cfg.mse_method; nested/threads override the config's values."""
    nested = cfg.nested if nested is None else nested
    threads = cfg.threads if threads is None else threads
    if cfg.mse_method == "cv":
        return estimate_mse_cv(dataset, spec, cfg.cv_folds, cfg.cv_repeats, nested=nested, stream=stream, threads=threads)
    return estimate_mse_boot632(dataset, spec, cfg.n_boot_mse, stream=stream, threads=threads)
