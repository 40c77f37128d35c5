import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cdgfem.experiments.problem import benchmark_spec, velocity  # noqa: E402
from cdgfem.experiments.runner import block_elements  # noqa: E402
from cdgfem.mesh import build_structured_mesh, decompose  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def mesh32():
    return build_structured_mesh(32)


@pytest.fixture(scope="session")
def layer_spec():
    return benchmark_spec(1e-6, 10.0)


@pytest.fixture(scope="session")
def layer_spec_homogeneous():
    return benchmark_spec(1e-6, 10.0, homogeneous=True)


@pytest.fixture(scope="session")
def block_decomp(mesh32):
    cache = {}

    def get(m):
        if m not in cache:
            cache[m] = decompose(mesh32, block_elements(32, m), velocity)
        return cache[m]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
