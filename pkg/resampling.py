"""
Deterministic resampling plans: CV folds, bootstrap draws, jackknife deletions
and parametric outcome redraws.

Every plan is a pure function of (seed, purpose tag, structural indices). A
Stream carries that identity; workers receive Streams, never generators, so
results do not depend on execution order or thread count.
"""
import logging
import zlib
from dataclasses import dataclass
from typing import Iterator, Protocol

import numpy as np
from joblib import Parallel, delayed

from data_manager import Dataset
from errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------
def _tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class Stream:
    """A seeded random stream identified by (seed, key path)."""

    seed: int
    key: tuple[int, ...] = ()

    def child(self, tag: str, *indices: int) -> "Stream":
        return Stream(self.seed, self.key + (_tag_code(tag),) + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.key))


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FoldPlan:
    """1-based fold label per sample."""

    assignments: np.ndarray
    K: int
    repeat_index: int

    def test_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.K + 1)[1:]

    def folds(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        for k in range(1, self.K + 1):
            yield k, self.train_rows(k), self.test_rows(k)


@dataclass(frozen=True)
class BootstrapDraw:
    counts: np.ndarray
    draw_index: int

    @property
    def excluded_mask(self) -> np.ndarray:
        return self.counts == 0

    @property
    def included(self) -> np.ndarray:
        """Row indices of the multiset, each repeated counts[i] times."""
        return np.repeat(np.arange(self.counts.shape[0]), self.counts)


@dataclass(frozen=True)
class JackknifeDeletion:
    left_out_index: int  # 0-based

    def kept_rows(self, n: int) -> np.ndarray:
        return np.delete(np.arange(n), self.left_out_index)


def _balanced_labels(n: int, K: int) -> np.ndarray:
    # extra samples go to the lowest-numbered folds
    return np.arange(n) % K + 1


def make_folds(n: int, K: int, seed: int, repeat_index: int) -> FoldPlan:
    return make_folds_from(Stream(seed), n, K, repeat_index)


def make_folds_from(stream: Stream, n: int, K: int, repeat_index: int) -> FoldPlan:
    """Random permutation of balanced fold labels; sizes differ by at most 1."""
    if K < 2:
        raise ConfigError(f"need at least 2 folds, got K={K}")
    if K > n:
        raise ConfigError(f"cannot split n={n} samples into K={K} folds")
    rng = stream.child("folds", repeat_index, n, K).generator()
    assignments = rng.permutation(_balanced_labels(n, K))
    assignments.setflags(write=False)
    return FoldPlan(assignments, K, repeat_index)


def draw_bootstrap(n: int, seed: int, draw_index: int) -> BootstrapDraw:
    return draw_bootstrap_from(Stream(seed), n, draw_index)


def draw_bootstrap_from(stream: Stream, n: int, draw_index: int) -> BootstrapDraw:
    """n iid uniform draws with replacement, recorded as counts."""
    if n < 1:
        raise ConfigError("bootstrap needs n >= 1")
    rng = stream.child("bootstrap", draw_index, n).generator()
    counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
    counts.setflags(write=False)
    return BootstrapDraw(counts, draw_index)


def jackknife_deletions(n: int) -> list[JackknifeDeletion]:
    return [JackknifeDeletion(i) for i in range(n)]


# ---------------------------------------------------------------------------
# Parametric redraw
# ---------------------------------------------------------------------------
class ParametricGenerator(Protocol):
    """Conditional mean per row plus a residual variance estimate."""

    def conditional_mean(self, x: np.ndarray) -> np.ndarray: ...

    @property
    def residual_variance(self) -> float: ...


def parametric_redraw(dataset: Dataset, generator: ParametricGenerator, seed: int, draw_index: int) -> Dataset:
    return parametric_redraw_from(Stream(seed), dataset, generator, draw_index)


def parametric_redraw_from(
    stream: Stream,
    dataset: Dataset,
    generator: ParametricGenerator,
    draw_index: int,
) -> Dataset:
    """Keep x; draw Y* ~ N(mean(x_i), sigma^2) independently per row."""
    sigma2 = float(generator.residual_variance)
    if not sigma2 > 0:
        raise NumericalError(f"parametric bootstrap needs a positive residual variance, got {sigma2}")
    mu = np.asarray(generator.conditional_mean(dataset.x), dtype=float)
    rng = stream.child("parametric", draw_index).generator()
    y_star = mu + np.sqrt(sigma2) * rng.standard_normal(dataset.n)
    return Dataset(y_star, dataset.x, dataset.feature_names)


# ---------------------------------------------------------------------------
# Parallel execution
# ---------------------------------------------------------------------------
def parallel_map(func, items, threads: int = 1) -> list:
    """func over items, results in item order; threads caps the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=min(threads, len(items)))(delayed(func)(item) for item in items)
