"""
Monte-Carlo harness: generate datasets from a linear Gaussian model, run the
full estimation stack on each instance, approximate the ground truth with
oracles, and summarise how well the estimates, SEs and intervals behave.

Scenario files hold one scenario per line as whitespace-separated key=value
tokens; comma-separated values for n, beta or method expand into a grid:

    # one-dimensional null grid
    name=null_1d n=20,30,50 p=1 beta=0 method=cv S=200 R=25 rho=jackknife
"""
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from analysis import R2Analysis
from config import SETTING_KEYS, RunConfig, parse_layer
from data_manager import Dataset
from errors import ConfigError, NumericalError, OOSR2Error, ScenarioError
from predictors import PredictorSpec, train
from r2_inference import ESTIMATORS, pearson
from resampling import Stream, parallel_map

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05
MAX_P = 1000


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ScenarioConfig:
    """
    Y = X beta + eps, X iid N(0, 1) (n x p), eps iid N(0, sigma2).
    The first beta_nonzero entries of beta equal beta_value, the rest are 0.
    """

    n: int
    p: int = 1
    beta_value: float = 1.0
    beta_nonzero: Optional[int] = None
    sigma2: float = 1.0
    n_mc: int = 200
    oracle_test_size: int = 10_000
    oracle_reps: int = 1_000
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    run: RunConfig = field(default_factory=RunConfig)
    estimator: str = "pooling"
    name: str = ""

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError(f"scenario n must be >= 3, got {self.n}")
        if not 1 <= self.p <= MAX_P:
            raise ConfigError(f"scenario p must lie in [1, {MAX_P}], got {self.p}")
        if self.beta_nonzero is not None and not 0 <= self.beta_nonzero <= self.p:
            raise ConfigError(f"beta_nonzero={self.beta_nonzero} exceeds p={self.p}")
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.n_mc < 1:
            raise ConfigError(f"n_mc must be >= 1, got {self.n_mc}")
        if self.oracle_reps < 1 or self.oracle_test_size < 1:
            raise ConfigError("oracle_reps and oracle_test_size must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got '{self.estimator}'")

    @property
    def beta(self) -> np.ndarray:
        k = self.p if self.beta_nonzero is None else self.beta_nonzero
        beta = np.zeros(self.p)
        beta[:k] = self.beta_value
        return beta

    @property
    def outcome_variance(self) -> float:
        """Marginal Var(Y) under the standard normal design."""
        return float(self.beta @ self.beta) + self.sigma2

    @property
    def true_mst(self) -> float:
        return self.outcome_variance * (self.n + 1) / self.n

    @property
    def stream(self) -> Stream:
        return Stream(self.run.seed)

    def label(self) -> str:
        grid = f"n{self.n}_p{self.p}_b{self.beta_value:g}_{self.run.mse_method}"
        return f"{self.name}:{grid}" if self.name else grid

    def describe(self) -> dict:
        """Flat, JSON-ready description used by the manifest and CSV rows."""
        return {
            "scenario": self.label(),
            "n": self.n,
            "p": self.p,
            "beta": self.beta_value,
            "beta_nonzero": int(np.count_nonzero(self.beta)),
            "sigma2": self.sigma2,
            "S": self.n_mc,
            "oracle_reps": self.oracle_reps,
            "oracle_test_size": self.oracle_test_size,
            "predictor": self.predictor.kind,
            "estimator": self.estimator,
            **{f"run_{k}": v for k, v in asdict(self.run).items() if k != "threads"},
        }


# ---------------------------------------------------------------------------
# Data generation and oracles
# ---------------------------------------------------------------------------
def _draw(sc: ScenarioConfig, stream: Stream, size: int) -> Dataset:
    rng = stream.generator()
    x = rng.standard_normal((size, sc.p))
    y = x @ sc.beta + math.sqrt(sc.sigma2) * rng.standard_normal(size)
    return Dataset(y, x)


def generate_dataset(sc: ScenarioConfig, instance_index: int) -> Dataset:
    """Monte-Carlo instance number instance_index; a pure function of (seed, index)."""
    return _draw(sc, sc.stream.child("instance", instance_index), sc.n)


@dataclass(frozen=True)
class OracleR2:
    true_r2: float
    mc_se: float
    true_mse: float
    true_mst: float


def _oracle_test_mse(sc: ScenarioConfig, rep: int) -> float:
    stream = sc.stream.child("oracle", rep)
    train_set = _draw(sc, stream.child("train"), sc.n)
    test_set = _draw(sc, stream.child("test"), sc.oracle_test_size)
    model = train(sc.predictor, train_set, stream.child("fit"))
    return float(np.mean((test_set.y - model.predict(test_set.x)) ** 2))


def oracle_true_r2(sc: ScenarioConfig) -> OracleR2:
    """
    Fit on oracle_reps fresh training sets, score each on a large fresh test
    set, and compare the average test MSE to the analytic true MST.
    """
    if not sc.true_mst > 0:
        raise NumericalError("zero outcome variance: true R² undefined")
    logger.info("Oracle %s: %d reps x %d test points", sc.label(), sc.oracle_reps, sc.oracle_test_size)
    mses = np.array(parallel_map(lambda r: _oracle_test_mse(sc, r), range(sc.oracle_reps), sc.run.threads))
    true_mse = math.fsum(mses) / mses.shape[0]
    sd = float(np.std(mses, ddof=1)) if mses.shape[0] > 1 else 0.0
    return OracleR2(
        true_r2=1.0 - true_mse / sc.true_mst,
        mc_se=sd / math.sqrt(mses.shape[0]) / sc.true_mst,
        true_mse=true_mse,
        true_mst=sc.true_mst,
    )


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class InstanceResult:
    index: int
    r2: float = math.nan
    se: float = math.nan
    mse: float = math.nan
    mst: float = math.nan
    rho_hat: float = math.nan
    ci_lower: float = math.nan
    ci_upper: float = math.nan
    p_one_sided: float = math.nan
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_instance(sc: ScenarioConfig, instance_index: int) -> InstanceResult:
    """The full estimation stack on one instance; failures are recorded, not raised."""
    dataset = generate_dataset(sc, instance_index)
    # parallelism lives at the instance level
    cfg = sc.run.with_overrides(seed=_instance_seed(sc, instance_index), threads=1)
    try:
        report = R2Analysis(cfg, sc.predictor).analyze(dataset, estimator=sc.estimator)
    except OOSR2Error as e:
        logger.warning("Instance %d of %s failed: %s", instance_index, sc.label(), e)
        return InstanceResult(instance_index, error=str(e))
    return InstanceResult(
        index=instance_index,
        r2=report.r2,
        se=math.nan if report.se is None else report.se,
        mse=math.nan if report.mse is None else report.mse.point,
        mst=report.mst.point,
        rho_hat=math.nan if report.rho_hat is None else report.rho_hat,
        ci_lower=math.nan if report.ci_lower is None else report.ci_lower,
        ci_upper=math.nan if report.ci_upper is None else report.ci_upper,
        p_one_sided=math.nan if report.p_one_sided is None else report.p_one_sided,
    )


def _instance_seed(sc: ScenarioConfig, instance_index: int) -> int:
    return int(sc.stream.child("estimate", instance_index).generator().integers(0, 2**63))


def run_instances(sc: ScenarioConfig) -> list[InstanceResult]:
    return parallel_map(lambda s: run_instance(sc, s), range(sc.n_mc), sc.run.threads)


def _successes(sc: ScenarioConfig, instances: list[InstanceResult]) -> list[InstanceResult]:
    ok = [r for r in instances if not r.failed]
    n_failed = len(instances) - len(ok)
    if n_failed > MAX_FAILURE_FRACTION * len(instances):
        raise NumericalError(
            f"scenario {sc.label()}: {n_failed} of {len(instances)} instances failed"
        )
    return ok


def oracle_true_se_and_rho(
    sc: ScenarioConfig,
    instances: Optional[list[InstanceResult]] = None,
) -> tuple[float, float]:
    """sd of R² over instances, and the correlation of (MSE, MST) across them."""
    if instances is None:
        instances = run_instances(sc)
    ok = _successes(sc, instances)
    r2 = np.array([r.r2 for r in ok])
    true_se = float(np.std(r2, ddof=1)) if r2.shape[0] > 1 else 0.0
    rho = pearson([r.mse for r in ok], [r.mst for r in ok])
    return true_se, (0.0 if rho is None else rho)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DiagnosticsReport:
    """Aggregates over the successful instances of one scenario."""

    bias_r2: float
    se_ratio_geomean: float
    se_mse_of_se: float
    coverage: float
    ci_width_mean: float
    type1_error: Optional[float]
    true_r2_oracle: float
    true_r2_mc_se: float
    true_se_oracle: float
    rho_true_oracle: float
    rho_hat_mean: float
    mst_bias: float
    mse_bias: float
    mean_r2: float
    n_instances: int
    n_failed: int

    @property
    def log10_se_ratio(self) -> float:
        if not self.se_ratio_geomean > 0:
            return math.nan
        return math.log10(self.se_ratio_geomean)

    def to_row(self) -> dict:
        row = asdict(self)
        row["log10_se_ratio"] = self.log10_se_ratio
        return row


def _nanmean(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    return math.fsum(values) / values.shape[0] if values.shape[0] else math.nan


def summarize(
    sc: ScenarioConfig,
    instances: list[InstanceResult],
    oracle: OracleR2,
) -> DiagnosticsReport:
    ok = _successes(sc, instances)
    r2 = np.array([r.r2 for r in ok])
    se = np.array([r.se for r in ok])
    true_se, rho_true = oracle_true_se_and_rho(sc, instances)
    true_r2 = oracle.true_r2

    # geometric mean of SE ratios
    if true_se > 0 and np.all(se > 0):
        se_ratio = float(10 ** _nanmean(np.log10(se / true_se)))
    else:
        se_ratio = math.nan
    se_mse = _nanmean((se ** 2 - true_se ** 2) ** 2)

    lower = np.array([r.ci_lower for r in ok])
    upper = np.array([r.ci_upper for r in ok])
    has_ci = np.isfinite(lower) & np.isfinite(upper)
    covered = (lower <= true_r2) & (true_r2 <= upper)
    coverage = float(np.mean(covered[has_ci])) if has_ci.any() else math.nan
    width = _nanmean(upper - lower)

    type1 = None
    if true_r2 <= 0:
        p = np.array([r.p_one_sided for r in ok])
        p = p[np.isfinite(p)]
        type1 = float(np.mean(p < sc.run.alpha)) if p.shape[0] else math.nan

    return DiagnosticsReport(
        bias_r2=_nanmean(r2) - true_r2,
        se_ratio_geomean=se_ratio,
        se_mse_of_se=se_mse,
        coverage=coverage,
        ci_width_mean=width,
        type1_error=type1,
        true_r2_oracle=true_r2,
        true_r2_mc_se=oracle.mc_se,
        true_se_oracle=true_se,
        rho_true_oracle=rho_true,
        rho_hat_mean=_nanmean([r.rho_hat for r in ok]),
        mst_bias=_nanmean([r.mst for r in ok]) - sc.true_mst,
        mse_bias=_nanmean([r.mse for r in ok]) - oracle.true_mse,
        mean_r2=_nanmean(r2),
        n_instances=len(instances),
        n_failed=len(instances) - len(ok),
    )


def run_scenario(sc: ScenarioConfig, oracle: Optional[OracleR2] = None) -> DiagnosticsReport:
    """Instances, oracles and diagnostics for one scenario; a pure function of sc."""
    logger.info("Scenario %s: S=%d, seed=%d", sc.label(), sc.n_mc, sc.run.seed)
    if oracle is None:
        oracle = oracle_true_r2(sc)
    instances = run_instances(sc)
    report = summarize(sc, instances, oracle)
    logger.info(
        "Scenario %s: mean R² %.4f (true %.4f), coverage %s",
        sc.label(), report.mean_r2, report.true_r2_oracle, report.coverage,
    )
    return report


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------
# scenario key -> ScenarioConfig field
_SCENARIO_FIELDS = {
    "n": ("n", int),
    "p": ("p", int),
    "beta": ("beta_value", float),
    "nonzero": ("beta_nonzero", int),
    "sigma2": ("sigma2", float),
    "s": ("n_mc", int),
    "n_mc": ("n_mc", int),
    "oracle_reps": ("oracle_reps", int),
    "oracle_test_size": ("oracle_test_size", int),
    "estimator": ("estimator", str),
    "name": ("name", str),
}
_PREDICTOR_FIELDS = {
    "predictor": ("kind", str),
    "mixing": ("en_mixing", float),
    "inner_folds": ("en_inner_folds", int),
}
_RUN_ALIASES = {"method": "mse_method", "k": "folds", "r": "repeats", "b": "boot"}


def _parse_tokens(text: str, line_no: int) -> dict[str, list[str]]:
    values: dict[str, list[str]] = {}
    for token in text.split():
        if "=" not in token:
            raise ScenarioError(f"expected key=value, got '{token}'", line=line_no)
        key, _, raw = token.partition("=")
        key = key.strip().lower()
        key = _RUN_ALIASES.get(key, key)
        items = [v for v in raw.split(",") if v != ""]
        if not items:
            raise ScenarioError(f"no value for '{key}'", line=line_no)
        if len(items) > 1 and key not in ("n", "beta", "mse_method"):
            raise ScenarioError(f"only n, beta and method accept lists, got '{key}'", line=line_no)
        values[key] = items
    return values


def _build_scenario(values: dict[str, str], base: RunConfig, line_no: int) -> ScenarioConfig:
    sc_kwargs, pred_kwargs, run_flags = {}, {}, {}
    try:
        for key, raw in values.items():
            if key in _SCENARIO_FIELDS:
                name, parse = _SCENARIO_FIELDS[key]
                sc_kwargs[name] = parse(raw)
            elif key in _PREDICTOR_FIELDS:
                name, parse = _PREDICTOR_FIELDS[key]
                pred_kwargs[name] = parse(raw)
            elif key in SETTING_KEYS:
                run_flags[key] = raw
            else:
                raise ScenarioError(f"unknown scenario key '{key}'", line=line_no)
        if "n" not in sc_kwargs:
            raise ScenarioError("scenario needs n", line=line_no)
        run = base
        if run_flags:
            parsed = parse_layer(run_flags, f"scenario line {line_no}")
            changes = {SETTING_KEYS[k][0]: v for k, v in parsed.items() if SETTING_KEYS[k][0] in asdict(base)}
            run = base.with_overrides(**changes)
        return ScenarioConfig(predictor=PredictorSpec(**pred_kwargs), run=run, **sc_kwargs)
    except ScenarioError:
        raise
    except (ConfigError, ValueError, TypeError) as e:
        raise ScenarioError(str(e), line=line_no) from e


def parse_scenarios(text: str, base: Optional[RunConfig] = None) -> list[ScenarioConfig]:
    """Every scenario in a scenario file, grids expanded in file order."""
    base = base if base is not None else RunConfig()
    scenarios = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        values = _parse_tokens(body, line_no)
        grid_keys = [k for k in ("n", "beta", "mse_method") if k in values]
        combos = itertools.product(*(values[k] for k in grid_keys))
        for combo in combos:
            single = {k: v[0] for k, v in values.items()}
            single.update(dict(zip(grid_keys, combo)))
            scenarios.append(_build_scenario(single, base, line_no))
    if not scenarios:
        raise ScenarioError("scenario file defines no scenarios")
    return scenarios


def load_scenarios(file_path: str, base: Optional[RunConfig] = None) -> list[ScenarioConfig]:
    try:
        with open(file_path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {file_path}: {e}") from e
    return parse_scenarios(text, base)


def run_grid(scenarios: list[ScenarioConfig]) -> pd.DataFrame:
    """One diagnostics row per scenario (each scenario carries a single method)."""
    rows = []
    for sc in scenarios:
        report = run_scenario(sc)
        rows.append({**sc.describe(), **report.to_row()})
    return pd.DataFrame(rows)


def manifest(scenarios: list[ScenarioConfig]) -> dict:
    """Configs and seeds of a grid run, for reproducing it."""
    return {
        "scenarios": [sc.describe() for sc in scenarios],
        "seeds": {sc.label(): sc.run.seed for sc in scenarios},
    }
