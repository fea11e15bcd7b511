"""
Elastic net by cyclic coordinate descent along a descending lambda path,
with lambda chosen by an inner K-fold CV (minimum mean CV error).

Objective, on centered/standardized predictors and centered outcome:
    (2n)^-1 ||y - X b||^2 + lam * (alpha ||b||_1 + (1 - alpha)/2 ||b||_2^2)
The intercept is the training outcome mean and is never penalized.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from data_manager import Dataset, fit_transform
from predictors.base import FittedModel, Predictor, PredictorSpec, residual_variance
from predictors.mean_only import mean_model
from resampling import Stream, make_folds_from

logger = logging.getLogger(__name__)

CD_TOL = 1e-7
MAX_SWEEPS = 10_000
# glmnet's floor on alpha when deriving lambda_max for ridge-like mixing
MIN_ALPHA_FOR_LAMBDA_MAX = 1e-3


# ---------------------------------------------------------------------------
# Coordinate descent kernel
# ---------------------------------------------------------------------------
@njit(cache=True)
def _cd_path(x, y, lambdas, alpha, beta, tol, max_sweeps):
    n, p = x.shape
    v = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += x[i, j] * x[i, j]
        v[j] = s / n

    r = y.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                r[i] -= x[i, j] * beta[j]

    path = np.zeros((lambdas.shape[0], p))
    sweeps = np.zeros(lambdas.shape[0], dtype=np.int64)
    for li in range(lambdas.shape[0]):
        l1 = lambdas[li] * alpha
        l2 = lambdas[li] * (1.0 - alpha)
        for sweep in range(max_sweeps):
            max_delta = 0.0
            for j in range(p):
                denom = v[j] + l2
                if denom <= 0.0:
                    continue
                old = beta[j]
                z = 0.0
                for i in range(n):
                    z += x[i, j] * r[i]
                z = z / n + v[j] * old
                if z > l1:
                    new = (z - l1) / denom
                elif z < -l1:
                    new = (z + l1) / denom
                else:
                    new = 0.0
                delta = new - old
                if delta != 0.0:
                    for i in range(n):
                        r[i] -= x[i, j] * delta
                    beta[j] = new
                    if abs(delta) > max_delta:
                        max_delta = abs(delta)
            sweeps[li] = sweep + 1
            if max_delta < tol:
                break
        path[li, :] = beta
    return path, sweeps


def elastic_net_path(
    xs: np.ndarray,
    yc: np.ndarray,
    lambdas: np.ndarray,
    alpha: float,
    beta0: Optional[np.ndarray] = None,
    tol: float = CD_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> np.ndarray:
    """Coefficients (len(lambdas) x p), warm-started down the path."""
    xs = np.ascontiguousarray(xs, dtype=float)
    beta = np.zeros(xs.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    path, _ = _cd_path(xs, np.asarray(yc, dtype=float), np.asarray(lambdas, dtype=float),
                       float(alpha), beta, float(tol), int(max_sweeps))
    return path


def solve_elastic_net(
    xs: np.ndarray,
    yc: np.ndarray,
    lam: float,
    alpha: float,
    tol: float = CD_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> np.ndarray:
    """Coefficients at a single lambda, cold start."""
    return elastic_net_path(xs, yc, np.array([lam]), alpha, tol=tol, max_sweeps=max_sweeps)[0]


def elastic_net_objective(xs: np.ndarray, yc: np.ndarray, beta: np.ndarray, lam: float, alpha: float) -> float:
    n = xs.shape[0]
    resid = yc - xs @ beta
    penalty = alpha * np.sum(np.abs(beta)) + 0.5 * (1.0 - alpha) * np.sum(beta ** 2)
    return float(resid @ resid / (2.0 * n) + lam * penalty)


def lambda_max(xs: np.ndarray, yc: np.ndarray, alpha: float) -> float:
    """Smallest lambda at which every coefficient is zero."""
    n = xs.shape[0]
    if xs.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(xs.T @ yc)) / n / max(alpha, MIN_ALPHA_FOR_LAMBDA_MAX))


def lambda_grid(lam_max: float, count: int, ratio: float) -> np.ndarray:
    """Log-uniform grid from lam_max down to lam_max * ratio."""
    if count == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * ratio, count)


# ---------------------------------------------------------------------------
# Inner-CV tuning
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TuningResult:
    lambda_: float
    lambdas: np.ndarray
    cv_mse: np.ndarray
    degenerate: bool = False

    @property
    def selected_index(self) -> int:
        return int(np.argmin(self.cv_mse))


def _standardize(dataset: Dataset):
    transform = fit_transform(dataset.x, scale_predictors=True)
    y_mean = float(np.mean(dataset.y))
    return transform, transform.apply(dataset.x), dataset.y - y_mean, y_mean


def tune_lambda(spec: PredictorSpec, dataset: Dataset, stream: Stream) -> TuningResult:
    """Pick lambda minimizing the inner K-fold CV mean squared error."""
    _, xs, yc, _ = _standardize(dataset)
    lam_max = lambda_max(xs, yc, spec.en_mixing)
    if lam_max <= 0.0:
        logger.warning("Outcome has zero variance (or no predictors); elastic net reduces to the mean model")
        return TuningResult(0.0, np.array([0.0]), np.array([0.0]), degenerate=True)

    lambdas = lambda_grid(lam_max, spec.en_lambda_count, spec.en_lambda_ratio)
    plan = make_folds_from(stream.child("inner_cv"), dataset.n, spec.en_inner_folds, 0)
    sq_err = np.zeros(lambdas.shape[0])
    for k, train_rows, test_rows in plan.folds():
        train = dataset.subset(train_rows)
        transform, xs_k, yc_k, y_mean_k = _standardize(train)
        path = elastic_net_path(xs_k, yc_k, lambdas, spec.en_mixing)
        preds = y_mean_k + transform.apply(dataset.x[test_rows]) @ path.T
        sq_err += np.sum((dataset.y[test_rows, None] - preds) ** 2, axis=0)
    cv_mse = sq_err / dataset.n
    result = TuningResult(float(lambdas[int(np.argmin(cv_mse))]), lambdas, cv_mse)
    logger.debug("Selected lambda %.4g (index %d of %d)", result.lambda_, result.selected_index, lambdas.shape[0])
    return result


class ElasticNetPredictor(Predictor):

    @property
    def kind(self) -> str:
        return "elastic_net"

    def _fit(self, dataset: Dataset, stream: Stream) -> FittedModel:
        tuning = tune_lambda(self.spec, dataset, stream)
        if tuning.degenerate:
            return mean_model(dataset.y, dataset.p, kind=self.kind, lambda_=0.0, degenerate=True)

        transform, xs, yc, y_mean = _standardize(dataset)
        idx = tuning.selected_index
        beta = elastic_net_path(xs, yc, tuning.lambdas[: idx + 1], self.spec.en_mixing)[-1]
        fitted = y_mean + xs @ beta
        return FittedModel(
            coefficients=beta,
            intercept=y_mean,
            transform=transform,
            n_train=dataset.n,
            residual_variance=residual_variance(dataset.y, fitted, int(np.count_nonzero(beta))),
            kind=self.kind,
            lambda_=tuning.lambda_,
            meta={"lambdas": tuning.lambdas, "cv_mse": tuning.cv_mse},
        )
