import sys

import numpy as np
import pytest
from hypothesis import settings

from fourdvar.models import ModelSpec

settings.register_profile("fourdvar", deadline=None, max_examples=40)
settings.load_profile("fourdvar")


@pytest.fixture
def l63():
    return ModelSpec("L63")


@pytest.fixture
def l96():
    return ModelSpec("L96")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_linear_spec(rng, n=3, scheme="rk4", dt=0.1):
    A = rng.standard_normal((n, n))
    return ModelSpec("linear", dt=dt, scheme=scheme, params={"A": A})


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
