import numpy as np
import pytest

from cplab.distributions import InnovationDensity
from cplab.markov import ARModel, Drift, TARModel


@pytest.fixture
def gauss():
    return InnovationDensity("gaussian", 1.0)


@pytest.fixture
def ar_half(gauss):
    return ARModel(Drift.linear(0.5), gauss)


@pytest.fixture
def tar_model(gauss):
    # identifiable two-regime model: delta(0.5) = 0.5
    return TARModel(Drift.linear(0.5), Drift.linear(-0.5), 0.5, -1.0, 1.0, gauss)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def criterion(request):
    """Record one pass/fail line per acceptance criterion."""
    log = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(key, ok, detail):
        line = f"CRITERION {key:<3} {'PASS' if ok else 'FAIL'}  {detail}"
        log[key] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(log, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(log[key])
