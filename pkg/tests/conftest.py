import numpy as np
import pytest

from lsbvar.data import LongitudinalDataset
from lsbvar.model import ModelHyperparams


def random_dataset(rng, n=6, T=4, k=2, p=1, q=2, missing=0.0, lengths=None):
    """Small random dataset; ``missing`` is the per-entry missingness rate
    (the first row of every subject stays observed)."""
    lengths = [T] * n if lengths is None else lengths
    ys, xs, obs = [], [], []
    for Ti in lengths:
        y = rng.standard_normal((Ti, k))
        m = rng.random((Ti, k)) >= missing
        m[0] = True
        ys.append(y)
        xs.append(rng.standard_normal((Ti, p)))
        obs.append(m)
    z = rng.standard_normal((len(lengths), q))
    return LongitudinalDataset.from_arrays(ys, xs, z, observed=obs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_hp():
    return ModelHyperparams.default(2, 1, 2, H=3)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines,
                           key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
