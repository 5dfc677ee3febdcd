import numpy as np
import pytest
from hypothesis import settings

from stratperm.core import StratifiedMatrix

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_matrix(rng, sizes, dist="normal"):
    if dist == "normal":
        blocks = [rng.standard_normal((s, s)) for s in sizes]
    else:
        blocks = [rng.exponential(size=(s, s)) for s in sizes]
    return StratifiedMatrix.from_blocks(blocks)


def random_sizes(rng, max_k=3, max_size=5, min_size=1):
    k = int(rng.integers(1, max_k + 1))
    return tuple(int(x) for x in rng.integers(min_size, max_size + 1, size=k))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def swap2():
    return StratifiedMatrix.from_blocks([[[0.0, 1.0], [1.0, 0.0]]])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
