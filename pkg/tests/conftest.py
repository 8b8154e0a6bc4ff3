import math

import numpy as np
import pytest
from hypothesis import settings

from sublin.instance import InstanceSpec, generate

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@pytest.fixture
def case2_small():
    return generate(InstanceSpec("lower-linear-case2", n=8, d=4, l=2))


@pytest.fixture
def case1_small():
    return generate(InstanceSpec("lower-linear-case1", n=8, d=4, k=3, l=2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, echoed at the end of the session
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
