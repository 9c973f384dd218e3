import math

import numpy as np
import pytest

from bctmp.behaviors import BehaviorSpec, make_behavior
from bctmp.scenario import load_scenario
from bctmp.world import World

LIMITS3 = ((-math.pi, math.pi), (-2.8, 2.8), (-2.8, 2.8))


def rect(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def arm(obstacles=(), home=(0.0, 0.0, 0.0), links=(0.5, 0.4, 0.25), limits=LIMITS3, **kw):
    return World(links=links, joint_limits=limits, obstacles=tuple(obstacles), home=home, **kw)


@pytest.fixture(scope="session")
def open_world():
    return arm(home=(1.8, -1.0, -1.0))


@pytest.fixture(scope="session")
def shelf():
    return load_scenario("open_shelf")


@pytest.fixture(scope="session")
def corner():
    return load_scenario("corner_box")


@pytest.fixture(scope="session")
def grasp():
    return make_behavior(BehaviorSpec("grasp"))


@pytest.fixture(scope="session")
def insert():
    return make_behavior(BehaviorSpec("insert", noise_bound=0.005))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
