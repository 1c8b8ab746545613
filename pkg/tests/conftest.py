import numpy as np
import pytest

from qcgeom import kleinian as kl

ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("QCGEOM_CACHE_DIR", str(tmp_path_factory.mktemp("cq_cache")))
    yield
    mp.undo()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def rank2_group():
    return kl.build_schottky(2, 6.0)


@pytest.fixture(scope="session")
def rank2_orbit(rank2_group):
    return kl.enumerate_orbit(rank2_group, 9)


@pytest.fixture(scope="session")
def cyclic_group():
    return kl.build_schottky(1, 6.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
