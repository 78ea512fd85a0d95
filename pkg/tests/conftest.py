import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import settings

from matchamg.problems import PoissonSpec, block3d_partition, poisson7pt
from matchamg.sparse import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def lap1d(n: int) -> SparseMatrix:
    """tridiag(-1, 2, -1)."""
    m = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    return SparseMatrix.from_scipy(m, symmetric=True)


def random_sparse(rng, nrows, ncols, density=0.3) -> SparseMatrix:
    m = sp.random(nrows, ncols, density=density, random_state=rng, format="csr")
    return SparseMatrix.from_scipy(m)


def random_spd(rng, n, density=0.3) -> SparseMatrix:
    b = sp.random(n, n, density=density, random_state=rng)
    m = b @ b.T + n * sp.identity(n)
    return SparseMatrix.from_scipy(m, symmetric=True)


@pytest.fixture(scope="session")
def poisson8():
    spec = PoissonSpec.cube(8)
    a, b = poisson7pt(spec)
    return spec, a, b, block3d_partition(spec)


@pytest.fixture(scope="session")
def poisson16():
    spec = PoissonSpec.cube(16)
    a, b = poisson7pt(spec)
    return spec, a, b, block3d_partition(spec)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
