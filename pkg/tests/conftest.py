import numpy as np
import pytest

from ocde import generate_toy, make_grid
from ocde.estimator import InstrumentalDist, fit_ocde
from ocde.harness import TOY_INSTRUMENTAL

TOY_SEED = 20240611


@pytest.fixture(scope="session")
def toy_splits():
    s_train, s_val, s_test = np.random.SeedSequence(TOY_SEED).spawn(3)
    return generate_toy(10000, s_train), generate_toy(2000, s_val), generate_toy(2000, s_test)


@pytest.fixture(scope="session")
def toy_model(toy_splits):
    train, val, _ = toy_splits
    inst = InstrumentalDist(*TOY_INSTRUMENTAL)
    return fit_ocde(train, val, inst, make_grid(inst.lo, inst.hi, 1000), seed=TOY_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
