"""
Regression procedures package.
Provides the train / predict / tune_lambda contract over the registered
procedures (OLS, elastic net, mean-only).
"""
from typing import Optional

import numpy as np

from data_manager import Dataset
from errors import ConfigError, TrainingError
from predictor_registry import PredictorRegistry
from predictors.base import FittedModel, Predictor, PredictorSpec
from predictors.elastic_net import TuningResult
from predictors.elastic_net import tune_lambda as _tune_lambda
from resampling import Stream


def train(spec: PredictorSpec, dataset: Dataset, stream: Optional[Stream] = None) -> FittedModel:
    return PredictorRegistry.get(spec).fit(dataset, stream)


def predict(model: FittedModel, x_new: np.ndarray) -> np.ndarray:
    return model.predict(x_new)


def tune_lambda(spec: PredictorSpec, dataset: Dataset, stream: Optional[Stream] = None) -> TuningResult:
    if spec.kind != "elastic_net":
        raise ConfigError(f"tune_lambda needs an elastic_net spec, got '{spec.kind}'")
    if dataset.n < spec.en_inner_folds:
        raise TrainingError(f"tuning needs n >= {spec.en_inner_folds} rows, got {dataset.n}")
    return _tune_lambda(spec, dataset, stream if stream is not None else Stream(0))


__all__ = [
    "FittedModel", "Predictor", "PredictorSpec", "TuningResult",
    "train", "predict", "tune_lambda",
]
