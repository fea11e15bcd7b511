"""
Ordinary least squares with intercept, solved by column-pivoted QR.
"""
import logging

import numpy as np
from scipy.linalg import qr, solve_triangular

from data_manager import Dataset, fit_transform
from predictors.base import FittedModel, Predictor, residual_variance
from resampling import Stream

logger = logging.getLogger(__name__)

# relative |R_jj| threshold for rank detection, as in lm.fit
RANK_TOL = 1e-7


def pivoted_qr_solve(x: np.ndarray, y: np.ndarray, tol: float = RANK_TOL) -> tuple[np.ndarray, int]:
    """
    Least-squares coefficients of y on the columns of x (no intercept).
    Columns beyond the detected rank get zero coefficients.
    """
    n, p = x.shape
    beta = np.zeros(p)
    if p == 0 or n == 0:
        return beta, 0
    q, r, piv = qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return beta, 0
    rank = int(np.sum(diag > tol * diag[0]))
    coef = solve_triangular(r[:rank, :rank], q[:, :rank].T @ y)
    beta[piv[:rank]] = coef
    return beta, rank


class OLSPredictor(Predictor):
    """OLS on centered predictors; the intercept is the training outcome mean."""

    @property
    def kind(self) -> str:
        return "ols"

    def _fit(self, dataset: Dataset, stream: Stream) -> FittedModel:
        transform = fit_transform(dataset.x, scale_predictors=False)
        xc = transform.apply(dataset.x)
        y_mean = float(np.mean(dataset.y))
        beta, rank = pivoted_qr_solve(xc, dataset.y - y_mean)
        if rank < dataset.p:
            logger.debug("OLS design rank %d < p=%d; dropped columns get zero coefficients", rank, dataset.p)
        fitted = y_mean + xc @ beta
        return FittedModel(
            coefficients=beta,
            intercept=y_mean,
            transform=transform,
            n_train=dataset.n,
            residual_variance=residual_variance(dataset.y, fitted, rank),
            kind=self.kind,
            meta={"rank": rank},
        )
