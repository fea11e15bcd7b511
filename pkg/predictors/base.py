"""
Abstract base class for regression procedures, plus the spec / fitted-model
value objects every procedure shares.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from data_manager import Dataset, Transform
from errors import ConfigError, InputError, TrainingError
from predictor_registry import PredictorRegistry
from resampling import Stream


@dataclass(frozen=True)
class PredictorSpec:
    """
    A trainable regression procedure.

    kind must be registered with PredictorRegistry. mean_only ignores every
    en_* field.
    """

    kind: str = "ols"
    en_mixing: float = 0.5
    en_inner_folds: int = 10
    en_lambda_count: int = 100
    en_lambda_ratio: float = 1e-3

    def __post_init__(self):
        kinds = PredictorRegistry.kinds()
        if self.kind not in kinds:
            raise ConfigError(f"unknown predictor kind '{self.kind}', expected one of {kinds}")
        if not 0.0 <= self.en_mixing <= 1.0:
            raise ConfigError(f"en_mixing must lie in [0, 1], got {self.en_mixing}")
        if self.en_inner_folds < 2:
            raise ConfigError(f"en_inner_folds must be >= 2, got {self.en_inner_folds}")
        if self.en_lambda_count < 1:
            raise ConfigError(f"en_lambda_count must be >= 1, got {self.en_lambda_count}")
        if not 0.0 < self.en_lambda_ratio < 1.0:
            raise ConfigError(f"en_lambda_ratio must lie in (0, 1), got {self.en_lambda_ratio}")

    @property
    def min_train_size(self) -> int:
        return self.en_inner_folds if self.kind == "elastic_net" else 2


@dataclass(frozen=True)
class FittedModel:
    """
    An affine predictor in the space of its stored transform:
        y_hat(x) = intercept + transform.apply(x) @ coefficients
    """

    coefficients: np.ndarray
    intercept: float
    transform: Transform
    n_train: int
    residual_variance: float
    kind: str
    lambda_: Optional[float] = None
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, x_new: np.ndarray) -> np.ndarray:
        x_new = np.asarray(x_new, dtype=float)
        if x_new.ndim == 1 and x_new.size == 0:
            x_new = x_new.reshape(0, self.p)
        if x_new.ndim != 2 or x_new.shape[1] != self.p:
            raise InputError(
                f"x_new has shape {x_new.shape}, model was trained on {self.p} predictors"
            )
        if x_new.shape[0] == 0:
            return np.zeros(0)
        return self.intercept + self.transform.apply(x_new) @ self.coefficients

    # ParametricGenerator protocol
    def conditional_mean(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x)

    @property
    def raw_coefficients(self) -> np.ndarray:
        """Coefficients on the original predictor scale."""
        return self.coefficients / self.transform.scales

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - self.transform.means @ self.raw_coefficients)


class Predictor(ABC):
    """Abstract base class for regression procedures (OLS, elastic net, ...)."""

    def __init__(self, spec: PredictorSpec):
        self.spec = spec

    @property
    @abstractmethod
    def kind(self) -> str:
        """Return the predictor kind identifier."""
        pass

    @abstractmethod
    def _fit(self, dataset: Dataset, stream: Stream) -> FittedModel:
        pass

    def fit(self, dataset: Dataset, stream: Optional[Stream] = None) -> FittedModel:
        """Validate the training data, then train."""
        if dataset.n < self.spec.min_train_size:
            raise TrainingError(
                f"{self.kind} needs at least {self.spec.min_train_size} training rows, got {dataset.n}"
            )
        return self._fit(dataset, stream if stream is not None else Stream(0))


def residual_variance(y: np.ndarray, fitted: np.ndarray, df_model: int) -> float:
    """RSS / (n - df_model - 1); falls back to RSS / n when that is not positive."""
    n = y.shape[0]
    rss = float(np.sum((y - fitted) ** 2))
    dof = n - df_model - 1
    return rss / dof if dof > 0 else rss / n
