"""Classical reference solvers and the dense direct-solve oracle."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .core import FixedPointProblem, SparseMatrix, as_vector, matvec
from .engine import DIVERGENCE_FACTOR, ErrorBound, Trace, TraceRow
from .transforms import build_q


class SingularMatrixError(ValueError):
    pass


@dataclass
class IterationReport:
    solution: np.ndarray
    iterations: int
    matvec_equiv: float
    converged: bool
    trace: Trace = field(default_factory=Trace)
    link_cost: int = 0
    diverged: bool = False
    message: str = ""


def dense_solve(a: SparseMatrix, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting on the densified matrix."""
    b = as_vector(b, a.n, "b")
    dense = a.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    scale = max(float(np.abs(dense).max()), 1.0)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-14 * scale:
        raise SingularMatrixError(f"matrix is singular (pivot {pivots.min():.3g} at {int(np.argmin(pivots))})")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def fixed_point_reference(prob: FixedPointProblem) -> np.ndarray:
    """Dense solution of ``(I - P) X = F0``, recovered to the problem's reported scale."""
    n = prob.n
    dense = np.eye(n) - prob.operator.to_dense()
    x = dense_solve(SparseMatrix.from_dense(dense), prob.f0)
    return prob.recover(x)


class _Sweeps:
    """Shared bookkeeping for the sweep-based methods."""

    def __init__(self, n: int, nnz: int, stride: int, reference):
        self.n = n
        self.nnz = max(nnz, 1)
        self.trace = Trace(stride=max(1, stride))
        self.reference = None if reference is None else np.asarray(reference, dtype=np.float64)
        self.first_delta: Optional[float] = None

    def record(self, k: int, x: np.ndarray, delta: float, force: bool = False, bound: float = float("nan")) -> None:
        if not force and k % self.trace.stride:
            return
        if self.trace.rows and self.trace.rows[-1].step == k:
            return
        err = None if self.reference is None else float(np.abs(self.reference - x).sum())
        self.trace.rows.append(TraceRow(k, k * self.nnz, float(k), float(k), delta, bound, err))

    def diverging(self, delta: float) -> bool:
        if self.first_delta is None:
            self.first_delta = delta
            return False
        return delta > DIVERGENCE_FACTOR * self.first_delta


def _affine(prob, tol, max_iter, stride, reference, accept=None, certify=False) -> IterationReport:
    op = prob.operator
    book = _Sweeps(prob.n, op.nnz, stride, reference)
    bounder = ErrorBound(prob)
    # the increment P^(k-1) f0 plays the role of the fluid, so the same bound applies
    certify = certify and bounder.available
    x = np.zeros(prob.n)
    delta = float(np.abs(prob.f0).sum())
    bound = lambda d: bounder.of(float(np.abs(d).sum()), bounder.weighted_norm(d))  # noqa: E731
    book.record(0, prob.recover(x), delta, bound=bound(prob.f0) if certify else float("nan"))
    for k in range(1, max_iter + 1):
        x_new = matvec(op, x) + prob.f0
        step = x_new - x
        delta = float(np.abs(step).sum())
        x = x_new
        b = bound(step) if certify else float("nan")
        book.record(k, prob.recover(x), delta, bound=b)
        done = b <= tol if certify else delta <= tol
        if done and (accept is None or accept(x)):
            book.record(k, prob.recover(x), delta, force=True, bound=b)
            return IterationReport(prob.recover(x), k, float(k), True, book.trace, k * book.nnz)
        if not np.isfinite(delta) or book.diverging(delta):
            book.record(k, prob.recover(x), delta, force=True, bound=b)
            return IterationReport(
                prob.recover(x), k, float(k), False, book.trace, k * book.nnz, True, f"diverged at iteration {k}"
            )
    book.record(max_iter, prob.recover(x), delta, force=True)
    return IterationReport(prob.recover(x), max_iter, float(max_iter), False, book.trace, max_iter * book.nnz)


def power_affine(prob: FixedPointProblem, tol: float = 1e-10, max_iter: int = 10_000, *, trace_stride: int = 1,
                 reference=None, certify: bool = False) -> IterationReport:
    """Iterate ``x <- P x + F0`` from zero until ``||dx||_1 <= tol``.

    The iterates are the partial sums of the power series of the fixed
    point.  With ``certify`` (and a contraction factor below 1) the stop
    rule is the error bound of the increment instead, so a converged
    report is within ``tol`` of the limit.
    """
    return _affine(prob, tol, max_iter, trace_stride, reference, certify=certify)


def jacobi(a: SparseMatrix, b, tol: float = 1e-10, max_iter: int = 10_000, *, trace_stride: int = 1,
           reference=None, certify: bool = False) -> IterationReport:
    """Jacobi sweeps from zero, written as ``x <- Q x + D^-1 b``.

    Stops once ``||dx||_1 <= tol`` and ``||A x - b||_inf <= tol``;
    ``certify`` swaps the first test for the error bound as in
    :func:`power_affine`.
    """
    b = as_vector(b, a.n, "b")
    prob = build_q(a, b)
    return _affine(prob, tol, max_iter, trace_stride, reference,
                   accept=lambda x: np.abs(a.matvec(x) - b).max() <= tol, certify=certify)


def gauss_seidel(a: SparseMatrix, b, tol: float = 1e-10, max_iter: int = 10_000, *, trace_stride: int = 1,
                 reference=None) -> IterationReport:
    """In-place ascending sweeps ``x_i <- (b_i - sum_{j != i} a_ij x_j) / a_ii``."""
    b = as_vector(b, a.n, "b")
    prob = build_q(a, b)
    q = prob.operator.sparse
    f0 = prob.f0
    n = a.n
    rows = [q.row(i) for i in range(n)]
    book = _Sweeps(n, q.nnz, trace_stride, reference)
    x = np.zeros(n)
    book.record(0, x, float(np.abs(f0).sum()))
    for k in range(1, max_iter + 1):
        delta = 0.0
        for i in range(n):
            cols, vals = rows[i]
            xi = f0[i] + float(vals @ x[cols])
            delta += abs(xi - x[i])
            x[i] = xi
        book.record(k, x, delta)
        if delta <= tol and np.abs(a.matvec(x) - b).max() <= tol:
            book.record(k, x, delta, force=True)
            return IterationReport(x, k, float(k), True, book.trace, k * book.nnz)
        if not np.isfinite(delta) or book.diverging(delta):
            book.record(k, x, delta, force=True)
            return IterationReport(x, k, float(k), False, book.trace, k * book.nnz, True, f"diverged at sweep {k}")
    book.record(max_iter, x, delta, force=True)
    return IterationReport(x, max_iter, float(max_iter), False, book.trace, max_iter * book.nnz)
