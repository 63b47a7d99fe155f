import numpy as np
import pytest

from priorreg.autodiff import MlpParams, init_mlp


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def fd_grad(f, flat, h=1e-6):
    """Central differences of ``f(flat)`` over every coordinate."""
    g = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def with_flat(params: MlpParams, flat) -> MlpParams:
    return MlpParams.from_flat(flat, params.layer_sizes, params.activation)


@pytest.fixture
def small_net():
    return init_mlp([2, 8, 8, 1], seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
