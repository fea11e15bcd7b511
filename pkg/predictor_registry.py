"""
Predictor registry singleton.
Maps a PredictorSpec kind to the regression procedure that trains it.
"""
from typing import Optional, TYPE_CHECKING

from errors import ConfigError

if TYPE_CHECKING:
    from predictors.base import Predictor, PredictorSpec


class PredictorRegistry:
    """
    Singleton registry of regression procedures.

    Usage:
        # Built-ins are registered lazily on first lookup
        predictor = PredictorRegistry.get(PredictorSpec(kind="elastic_net"))
        model = predictor.fit(dataset, stream)

        # Plug in another procedure, then select it by kind
        PredictorRegistry.register("my_kind", MyPredictor)
        spec = PredictorSpec(kind="my_kind")

    Registrations are per process. Worker processes started for threads > 1
    see only the built-ins unless the registering module runs there too.
    """

    _classes: Optional[dict[str, type]] = None

    @classmethod
    def _ensure_builtins(cls) -> dict[str, type]:
        if cls._classes is None:
            from predictors.elastic_net import ElasticNetPredictor
            from predictors.mean_only import MeanOnlyPredictor
            from predictors.ols import OLSPredictor
            cls._classes = {
                "ols": OLSPredictor,
                "elastic_net": ElasticNetPredictor,
                "mean_only": MeanOnlyPredictor,
            }
        return cls._classes

    @classmethod
    def get(cls, spec: "PredictorSpec") -> "Predictor":
        """Instantiate the procedure registered for spec.kind."""
        classes = cls._ensure_builtins()
        if spec.kind not in classes:
            raise ConfigError(f"no predictor registered for kind '{spec.kind}'")
        return classes[spec.kind](spec)

    @classmethod
    def register(cls, kind: str, predictor_cls: type) -> None:
        cls._ensure_builtins()[kind] = predictor_cls

    @classmethod
    def kinds(cls) -> list[str]:
        return sorted(cls._ensure_builtins())

    @classmethod
    def clear(cls) -> None:
        """Drop custom registrations (built-ins come back on next lookup)."""
        cls._classes = None
