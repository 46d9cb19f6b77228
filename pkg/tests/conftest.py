import numpy as np
import pytest

from cvit.model import CvitModel, ModelConfig

ACCEPTANCE_LINES: list[str] = []

TINY = ModelConfig(rows=10, cols=10, patch=5, dim=16, heads=2, layers=2, ffn_hidden=64, head_hidden=128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_model():
    return CvitModel(TINY, seed=3)


@pytest.fixture
def tiny_batch(rng):
    b = 2
    return {
        "history": rng.uniform(-1, 1, (b, TINY.channels, TINY.rows, TINY.cols)),
        "context": rng.uniform(-1, 1, (b, TINY.channels, TINY.context_dim)),
        "target": rng.uniform(-1, 1, (b, TINY.rows, TINY.cols)),
        "raw": rng.integers(0, 5, (b, TINY.rows, TINY.cols)).astype(float),
    }


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
