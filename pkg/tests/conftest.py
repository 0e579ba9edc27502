import numpy as np
import pytest

from smoothtaylor.model import ScoreTarget
from smoothtaylor.toy import random_conv_net, random_dense_net


@pytest.fixture
def conv_net():
    return random_conv_net(3, (2, 12, 12), channels=(3,), outputs=3)


@pytest.fixture
def dense_net():
    return random_dense_net(5, in_dim=6, hidden=(8, 8), outputs=3)


@pytest.fixture
def logit0():
    return ScoreTarget(0, "logit")


def rng(seed=0):
    return np.random.default_rng(seed)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
