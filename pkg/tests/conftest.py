import math
import os

import pytest

from catalyst.profile import RuntimeDistribution
from catalyst.sim import KINDS, StrategySpec, simulate_batch

ACCEPTANCE_LINES = []

posix_only = pytest.mark.skipif(os.name != "posix", reason="needs POSIX process control")


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile every kernel once so timed sections measure execution only."""
    d = RuntimeDistribution.from_mapping({1: 0.5, 3: 0.25, math.inf: 0.25})
    for kind in KINDS:
        for policy in ("unit", "doubling"):
            spec = StrategySpec(kind, delta=1, capacity=2, slot_policy=policy)
            simulate_batch(d, spec, cap=50, trials=2, seed=0)


@pytest.fixture
def example_law():
    """P[X = 1] = 0.01, otherwise never halts."""
    return RuntimeDistribution.from_mapping({1: 0.01, math.inf: 0.99})


@pytest.fixture
def law_file(tmp_path):
    def write(text, name="law.txt"):
        p = tmp_path / name
        p.write_text(text)
        return p

    return write


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
