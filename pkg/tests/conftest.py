import numpy as np
import pytest

from topoalloc.allocation import IdleSequence
from topoalloc.exact import ScasModel
from topoalloc.topology import FatTree
from topoalloc.workload import Job


@pytest.fixture
def tree4():
    return FatTree(4)


@pytest.fixture
def tree8():
    return FatTree(8)


def make_model(tree, idle, sizes, c=1000.0):
    jobs = [Job(i, s, 1.0, 1.0) for i, s in enumerate(sizes)]
    return ScasModel(jobs, IdleSequence.of(idle), tree, c)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
