"""Shared fixtures and the acceptance summary printer."""
import numpy as np
import pytest

from pcrh.data import simulate_cohort
from pcrh.design import DesignMatrices, ModelSpec, build_design

INTERCEPT_ONLY = ModelSpec(("1",), ("1",))


def make_dm(y, X, group, Z=None, spec=INTERCEPT_ONLY):
    """Hand-built design; bypasses the cohort layer for small oracles."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    group = np.asarray(group, dtype=np.intp)
    if Z is None:
        Z = np.ones((len(y), 1))
    m = int(group.max()) + 1
    labels = tuple(spec.labels) if X.shape[1] == len(spec.labels) else tuple(f"x{j}" for j in range(X.shape[1]))
    return DesignMatrices(spec, y, X, np.asarray(Z, dtype=float), group,
                          tuple(f"s{i}" for i in range(m)), labels)


def balanced_oneway(m=20, n=5, tau=0.7, sigma=0.5, mu=1.0, seed=3):
    rng = np.random.default_rng(seed)
    b = rng.normal(0, tau, m)
    y = mu + np.repeat(b, n) + rng.normal(0, sigma, m * n)
    return make_dm(y, np.ones(m * n), np.repeat(np.arange(m), n))


@pytest.fixture(scope="session")
def default_cohort():
    return simulate_cohort(seed=11)[0]


@pytest.fixture(scope="session")
def default_dm(default_cohort):
    return build_design(default_cohort)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
