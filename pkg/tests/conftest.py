from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from looptree_lab.gw_trees import OffspringLaw, PlaneTree, make_offspring_law, sample_conditioned_gw

settings.register_profile(
    "lab",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def law15() -> OffspringLaw:
    return make_offspring_law(1.5)


@pytest.fixture(scope="session")
def binary_law() -> OffspringLaw:
    return OffspringLaw(alpha=1.5, tail_constant=1.0, pmf=np.array([0.5, 0.0, 0.5]))


@pytest.fixture
def path3() -> PlaneTree:
    return PlaneTree(np.array([1, 1, 0]))


@pytest.fixture
def star3() -> PlaneTree:
    return PlaneTree(np.array([3, 0, 0, 0]))


def random_tree(law: OffspringLaw, n: int, seed: int) -> PlaneTree:
    return sample_conditioned_gw(law, n, np.random.default_rng(seed))
