import numpy as np
import pytest
from hypothesis import settings

from thin_inductor.curve import circle, ellipse, torus_knot
from thin_inductor.singular_field import SEPTIC, SingularField
from thin_inductor.tube import make_tube

settings.register_profile("numerics", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("numerics")


@pytest.fixture(scope="session")
def unit_circle():
    return circle(1.0)


@pytest.fixture(scope="session")
def ell():
    return ellipse(1.0, 0.5)


@pytest.fixture(scope="session")
def knot():
    return torus_knot(2, 3, 1.0, 0.3)


@pytest.fixture(scope="session")
def circle_tube(unit_circle):
    return make_tube(unit_circle, delta=0.4)


@pytest.fixture(scope="session")
def circle_field(circle_tube):
    return SingularField(circle_tube)


@pytest.fixture(scope="session")
def circle_field_septic(circle_tube):
    return SingularField(circle_tube, SEPTIC)


@pytest.fixture(scope="session")
def knot_tube(knot):
    # strands of this knot are 0.6 apart; the default eta = 0.5 tube (delta 0.414) overlaps itself
    return make_tube(knot, delta=0.25)


@pytest.fixture(scope="session")
def knot_field(knot_tube):
    return SingularField(knot_tube)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: int(k.split("-")[1])):
            terminalreporter.write_line(lines[key])
