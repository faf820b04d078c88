import numpy as np
import pytest

from uwcolor.autograd import default_dtype
from uwcolor.data import make_toy_domains


@pytest.fixture
def f64():
    with default_dtype("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_domains(tmp_path_factory):
    """Eight 32 px images per domain, shared by the training tests."""
    return make_toy_domains(tmp_path_factory.mktemp("toy32"), 8, 32, seed=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
