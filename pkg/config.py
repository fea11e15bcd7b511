"""
Run configuration: the RunConfig value object and the layered settings loader.

Resolution order (later wins):
    built-in defaults -> flat key=value config file -> OOSR2_* env vars -> CLI flags

Usage:
    settings = resolve_settings("run.cfg", flags={"folds": 5})
    cfg = RunConfig.from_settings(settings)
"""
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Literal, Mapping, Optional

from dotenv import dotenv_values

from errors import ConfigError
from predictor_registry import PredictorRegistry

logger = logging.getLogger(__name__)

ENV_PREFIX = "OOSR2_"

MseMethod = Literal["cv", "boot632"]
RhoMethod = Literal["nonparam_boot", "param_boot", "jackknife"]
SeMethod = Literal["delta", "bootstrap"]
CiMethod = Literal["normal", "percentile", "bca"]
OutputFormat = Literal["json", "csv", "text-table"]

MSE_METHODS = ("cv", "boot632")
RHO_METHODS = ("nonparam_boot", "param_boot", "jackknife")
SE_METHODS = ("delta", "bootstrap")
CI_METHODS = ("normal", "percentile", "bca")
OUTPUT_FORMATS = ("json", "csv", "text-table")
FORMAT_ALIASES = {"text": "text-table"}

# Short CLI spellings of the rho methods.
RHO_ALIASES = {
    "npboot": "nonparam_boot",
    "pboot": "param_boot",
    "jackknife": "jackknife",
    "nonparam_boot": "nonparam_boot",
    "param_boot": "param_boot",
}

MAX_SEED = 2**64 - 1


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    """Every knob of one estimation run. Defaults mirror the case-study setup."""

    seed: int = 0
    mse_method: MseMethod = "cv"
    cv_folds: int = 10
    cv_repeats: int = 100
    n_boot_mse: int = 100
    rho_method: RhoMethod = "jackknife"
    n_boot_rho: int = 50
    se_method: SeMethod = "delta"
    ci_method: CiMethod = "normal"
    alpha: float = 0.05
    nested: bool = True
    threads: int = 1

    def __post_init__(self):
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.mse_method not in MSE_METHODS:
            raise ConfigError(f"mse_method must be one of {MSE_METHODS}, got '{self.mse_method}'")
        if self.rho_method not in RHO_METHODS:
            raise ConfigError(f"rho_method must be one of {RHO_METHODS}, got '{self.rho_method}'")
        if self.se_method not in SE_METHODS:
            raise ConfigError(f"se_method must be one of {SE_METHODS}, got '{self.se_method}'")
        if self.ci_method not in CI_METHODS:
            raise ConfigError(f"ci_method must be one of {CI_METHODS}, got '{self.ci_method}'")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.cv_repeats < 1:
            raise ConfigError(f"cv_repeats must be >= 1, got {self.cv_repeats}")
        if self.n_boot_mse < 1:
            raise ConfigError(f"n_boot_mse must be >= 1, got {self.n_boot_mse}")
        if self.n_boot_rho < 2:
            raise ConfigError(f"n_boot_rho must be >= 2, got {self.n_boot_rho}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.se_method == "bootstrap" and self.rho_method == "jackknife":
            raise ConfigError(
                "bootstrap SE needs bootstrap replicates; use --rho npboot or pboot"
            )
        if self.ci_method in ("percentile", "bca") and self.rho_method == "jackknife":
            raise ConfigError(
                f"{self.ci_method} intervals need bootstrap replicates; use --rho npboot or pboot"
            )

    def check_sample_size(self, n: int) -> None:
        """Validate the config against a dataset of n rows."""
        if self.mse_method == "cv" and self.cv_folds > n:
            raise ConfigError(f"cv_folds={self.cv_folds} exceeds the sample size n={n}")

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    @classmethod
    def from_settings(cls, settings: Mapping[str, Any]) -> "RunConfig":
        """Build from a resolved settings dict (keys as in SETTING_KEYS)."""
        kwargs = {}
        names = {f.name for f in fields(cls)}
        for key, value in settings.items():
            field_name = SETTING_KEYS[key][0]
            if field_name in names:
                kwargs[field_name] = value
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Settings parsing
# ---------------------------------------------------------------------------
def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{value}'")


def _parse_rho(value: Any) -> str:
    text = str(value).strip().lower()
    if text not in RHO_ALIASES:
        raise ValueError(f"unknown rho method '{value}'")
    return RHO_ALIASES[text]


def _parse_choice(choices: tuple) -> Callable[[Any], str]:
    def parse(value: Any) -> str:
        text = str(value).strip().lower()
        if text not in choices:
            raise ValueError(f"'{value}' is not one of {', '.join(choices)}")
        return text
    return parse


def _parse_format(value: Any) -> OutputFormat:
    text = str(value).strip().lower()
    return _parse_choice(OUTPUT_FORMATS)(FORMAT_ALIASES.get(text, text))


def _parse_predictor(value: Any) -> str:
    text = str(value).strip().lower()
    if text not in PredictorRegistry.kinds():
        raise ValueError(f"unknown predictor kind '{value}'")
    return text


# key -> (RunConfig field or CLI-only name, parser)
SETTING_KEYS: dict[str, tuple[str, Callable[[Any], Any]]] = {
    "seed": ("seed", int),
    "mse_method": ("mse_method", _parse_choice(MSE_METHODS)),
    "folds": ("cv_folds", int),
    "repeats": ("cv_repeats", int),
    "boot": ("n_boot_mse", int),
    "rho": ("rho_method", _parse_rho),
    "n_boot_rho": ("n_boot_rho", int),
    "se": ("se_method", _parse_choice(SE_METHODS)),
    "ci": ("ci_method", _parse_choice(CI_METHODS)),
    "alpha": ("alpha", float),
    "nested": ("nested", _parse_bool),
    "threads": ("threads", int),
    "format": ("format", _parse_format),
    "scale": ("scale", _parse_bool),
    "predictor": ("predictor", _parse_predictor),
    "en_mixing": ("en_mixing", float),
}


def parse_layer(raw: Mapping[str, Any], source: str) -> dict[str, Any]:
    parsed = {}
    for key, value in raw.items():
        if value is None:
            continue
        norm = key.strip().lower().replace("-", "_")
        if norm not in SETTING_KEYS:
            raise ConfigError(f"unknown configuration key '{key}' in {source}")
        try:
            parsed[norm] = SETTING_KEYS[norm][1](value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for '{key}' in {source}: {e}") from e
    return parsed


def read_config_file(path: str) -> dict[str, Any]:
    """Parse a flat key=value file (same syntax as a .env file)."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found -> {path}")
    return parse_layer(dotenv_values(path), f"config file {path}")


def read_environment(environ: Optional[Mapping[str, str]] = None) -> dict[str, Any]:
    """Collect OOSR2_<KEY> overrides."""
    environ = os.environ if environ is None else environ
    raw = {
        name[len(ENV_PREFIX):]: value
        for name, value in environ.items()
        if name.startswith(ENV_PREFIX)
    }
    return parse_layer(raw, "environment")


def resolve_settings(
    config_file: Optional[str] = None,
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> dict[str, Any]:
    """Merge the configuration layers; explicit flags win."""
    settings: dict[str, Any] = {}
    if config_file:
        settings.update(read_config_file(config_file))
    settings.update(read_environment(environ))
    if flags:
        settings.update(parse_layer(flags, "command line"))
    logger.debug("Resolved settings: %s", settings)
    return settings
