"""
Null model: predicts the training outcome mean everywhere.
"""
import numpy as np

from data_manager import Dataset, Transform
from predictors.base import FittedModel, Predictor, residual_variance
from resampling import Stream


def mean_model(y: np.ndarray, p: int, kind: str = "mean_only", **extra) -> FittedModel:
    """All-zero coefficients, intercept = mean(y)."""
    y_mean = float(np.mean(y))
    return FittedModel(
        coefficients=np.zeros(p),
        intercept=y_mean,
        transform=Transform.identity(p),
        n_train=y.shape[0],
        residual_variance=residual_variance(y, np.full_like(y, y_mean), 0),
        kind=kind,
        **extra,
    )


class MeanOnlyPredictor(Predictor):

    @property
    def kind(self) -> str:
        return "mean_only"

    def _fit(self, dataset: Dataset, stream: Stream) -> FittedModel:
        return mean_model(dataset.y, dataset.p)
