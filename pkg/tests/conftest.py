import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from curvlab import LossConfig, Network, mlp  # noqa: E402
from curvlab.io import synthetic_dataset  # noqa: E402

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def relu_mlp():
    return mlp([5, 4, 4, 3], "relu", seed=1)


@pytest.fixture
def tanh_mlp():
    return mlp([5, 4, 4, 3], "tanh", seed=1)


@pytest.fixture
def deep_linear():
    return Network(mlp([5, 4, 4, 3], None, seed=0).layers, 5)


@pytest.fixture(params=["mse", "ce"])
def loss_cfg(request):
    return LossConfig(request.param, "sum")


def make_data(cfg, n, seed=0, d_in=5, c=3):
    return synthetic_dataset(seed, n, d_in, c, cfg)
