import sys
from fractions import Fraction

import numpy as np
import pytest

from diteration.core import SparseMatrix

A35_ROWS = [[5, 3, 2, 0], [0, 7, -4, 1], [-2, 0, 8, 0], [0, -2, 1, 3]]
X_STAR = np.array([51, 179, 149, 433]) / 1090


def exact_solve(rows, rhs):
    """Gauss-Jordan elimination in rationals; independent of numpy/scipy."""
    n = len(rows)
    m = [[Fraction(v) for v in row] + [Fraction(b)] for row, b in zip(rows, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col] / m[col][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return [m[i][n] / m[i][i] for i in range(n)]


def random_sdd(rng, n, density=0.5, margin=0.5):
    """Random matrix, strictly diagonally dominant by columns, positive diagonal."""
    dense = rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(dense, 0.0)
    off = np.abs(dense).sum(axis=0)
    np.fill_diagonal(dense, off + margin + rng.random(n))
    return SparseMatrix.from_dense(dense)


def random_contractive(rng, n, density=0.4, rho=0.8, signed=True):
    """Operator with every column abs sum at most ``rho``."""
    dense = rng.uniform(-1 if signed else 0, 1, (n, n)) * (rng.random((n, n)) < density)
    sums = np.abs(dense).sum(axis=0)
    sums[sums == 0] = 1.0
    dense = dense / sums * rho * rng.uniform(0.3, 1.0, n)
    return SparseMatrix.from_dense(dense)


def random_graph(rng, n, min_out=1, max_out=9):
    """Column-stochastic random graph with no dangling nodes."""
    rows, cols, vals = [], [], []
    for i in range(n):
        k = int(rng.integers(min_out, max_out + 1))
        targets = rng.choice(np.delete(np.arange(n), i), size=min(k, n - 1), replace=False)
        rows += targets.tolist()
        cols += [i] * len(targets)
        vals += [1.0 / len(targets)] * len(targets)
    return SparseMatrix(n, rows, cols, vals)


@pytest.fixture
def a35():
    return SparseMatrix.from_dense(np.array(A35_ROWS, dtype=float))


@pytest.fixture
def ones4():
    return np.ones(4)


@pytest.fixture
def running_p():
    """2x2 elimination example: p_11 = 0.75, p_21 = 0.5, p_12 = 0.1 (1-based)."""
    return SparseMatrix.from_dense(np.array([[0.75, 0.1], [0.5, 0.0]]))


@pytest.fixture
def eigen_p():
    return SparseMatrix.from_dense(np.array([[0.5, 1.0], [0.5, 0.0]]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
