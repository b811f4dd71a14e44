import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_tensor(rng, channels, height, width, scale=1.0):
    from patchguard import Tensor

    return Tensor(
        (rng.standard_normal((channels, height, width)) * scale).astype(np.float32)
    )
