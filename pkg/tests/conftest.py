import numpy as np
import pytest

from config import RunConfig
from data_manager import Dataset


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "y,x1,x2\n"
        "1.5,0.1,2\n"
        "2.0,0.4,1\n"
        "3.5,0.9,0\n"
        "4.0,1.6,3\n"
        "5.5,2.5,1\n"
        "6.0,3.6,2\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def linear_dataset():
    rng = np.random.default_rng(20240501)
    x = rng.standard_normal((40, 2))
    y = 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * rng.standard_normal(40)
    return Dataset(y, x, ("x1", "x2"))


@pytest.fixture
def noise_dataset():
    rng = np.random.default_rng(777)
    return Dataset(rng.standard_normal(40), rng.standard_normal((40, 1)), ("x1",))


@pytest.fixture
def fast_cfg():
    """Small K and R so that the full stack runs in a fraction of a second."""
    return RunConfig(cv_folds=5, cv_repeats=2, n_boot_rho=10, seed=11)


@pytest.fixture
def write_dataset_csv():
    """Writes y, x1..xp with a header at full precision."""

    def write(path, y, x):
        cols = ["y"] + [f"x{j + 1}" for j in range(x.shape[1])]
        rows = [",".join(cols)]
        for yi, xi in zip(y, x):
            rows.append(",".join(repr(float(v)) for v in [yi, *xi]))
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    return write
