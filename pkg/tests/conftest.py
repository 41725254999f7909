from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmismc.models import Toy1DModel
from rmismc.smc import MutationConfig, SMCConfig, TemperingSchedule

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one summary line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_model():
    # noisy data at x_true = 0.6, fixed once for the whole session
    return Toy1DModel.synthetic(0.6, np.random.default_rng(7))


@pytest.fixture
def fast_smc():
    return SMCConfig(schedule=TemperingSchedule.linear(3), mutation=MutationConfig(n_mcmc=1, step=0.5))


def gauss_legendre_integral(model, level, fn, n_nodes=400):
    """``int fn(x) L_level(x) pi_0(dx)`` for the toy model's uniform prior."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    states = x[:, None]
    lik = np.exp(model.log_likelihood(level, states))
    return 0.5 * float(np.sum(w * lik * fn(x)))
