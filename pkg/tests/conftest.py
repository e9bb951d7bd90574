import time

import numpy as np
import pytest

from acoustic_lab.collision_ops import KernelSpec, assemble_L
from acoustic_lab.torus import Torus
from acoustic_lab.velocity_space import build_grid


@pytest.fixture(scope="session")
def gh8():
    """8^3 Gauss-Hermite grid: exact low moments, cheap assembly."""
    return build_grid(1.0, (8, 8, 8), "gauss-hermite")


@pytest.fixture(scope="session")
def tiny():
    """4^3 uniform grid (too coarse for the moment checks; oracle sized)."""
    return build_grid(3.0, (4, 4, 4), check=False)


@pytest.fixture(scope="session")
def hard():
    return KernelSpec()


@pytest.fixture(scope="session")
def opL_gh8(gh8, hard):
    op = assemble_L(gh8, hard)
    op.eig
    return op


@pytest.fixture(scope="session")
def torus16():
    return Torus(1, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def opL16(hard):
    """Hard-sphere operator on the default 16^3 grid (about a minute to assemble)."""
    t0 = time.perf_counter()
    op = assemble_L(build_grid(6.0, (16, 16, 16)), hard)
    op.eig
    op.assembly_seconds = time.perf_counter() - t0
    return op
