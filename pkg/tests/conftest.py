import numpy as np
import pytest

from corrcam import FrameStack


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stack(rng, shape=(6, 5), m=12, dtype=float, sparse=0.7):
    frames = rng.exponential(1.0, (m,) + tuple(shape)) * (rng.random((m,) + tuple(shape)) > sparse)
    return FrameStack(frames.astype(dtype))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
