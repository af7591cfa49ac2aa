"""Convergence-condition checkers for diffusion operators and linear systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import OperatorSpec, SparseMatrix, as_vector, column_abs_sums

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a condition check.

    ``margins`` holds the per-column (or per-row) slack; ``witness`` is the
    first index whose margin fails, or ``None``.  ``weak`` is only filled
    in by checks that have a boundary-case variant.
    """

    satisfied: bool
    margins: np.ndarray
    witness: Optional[int] = None
    weak: Optional[bool] = None
    detail: str = ""


class SingularDiagonalError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"zero diagonal entry at index {index}")
        self.index = index


def _strict_report(margins: np.ndarray, detail: str = "") -> ConditionReport:
    bad = np.flatnonzero(~(margins > 0))
    witness = int(bad[0]) if bad.size else None
    return ConditionReport(bad.size == 0, margins, witness, detail=detail)


def _offdiag_abs_sums(a: SparseMatrix, axis: str) -> np.ndarray:
    dense_free = np.zeros(a.n)
    for j, i, v in a.triples():
        if i != j:
            dense_free[i if axis == "col" else j] += abs(v)
    return dense_free


def is_sdd_columns(a: SparseMatrix) -> ConditionReport:
    """Strict diagonal dominance by columns: ``|a_ii| > sum_{j != i} |a_ji|``."""
    margins = np.abs(a.diagonal()) - _offdiag_abs_sums(a, "col")
    return _strict_report(margins)


def is_sdd_rows(a: SparseMatrix) -> ConditionReport:
    margins = np.abs(a.diagonal()) - _offdiag_abs_sums(a, "row")
    return _strict_report(margins)


def _as_operator(op) -> OperatorSpec:
    return OperatorSpec(op) if isinstance(op, SparseMatrix) else op


def fluid_reduction(op) -> ConditionReport:
    """Every column absolute sum strictly below one."""
    return _strict_report(1.0 - column_abs_sums(_as_operator(op)))


def fluid_reduction_rows(op) -> ConditionReport:
    """Row analogue of :func:`fluid_reduction`."""
    op = _as_operator(op)
    return _strict_report(1.0 - np.abs(op.to_dense()).sum(axis=1))


def weak_fluid_reduction(op) -> ConditionReport:
    """Column sums <= 1, at least one < 1, on an irreducible pattern."""
    op = _as_operator(op)
    margins = 1.0 - column_abs_sums(op)
    if np.any(margins < 0):
        witness = int(np.flatnonzero(margins < 0)[0])
        return ConditionReport(False, margins, witness, weak=False, detail="column sum above 1")
    if not np.any(margins > 0):
        return ConditionReport(False, margins, 0, weak=False, detail="no column sum below 1")
    if not is_irreducible(op.pattern()):
        return ConditionReport(False, margins, None, weak=False, detail="reducible pattern")
    return ConditionReport(True, margins, None, weak=True)


def strongly_connected_components(m: SparseMatrix) -> List[List[int]]:
    """Tarjan's algorithm over the nonzero pattern, without recursion.

    Edges follow the diffusion convention (column ``i`` -> row ``j``).
    Components come out in reverse topological order.
    """
    n = m.n
    indptr, indices = m.indptr, m.indices
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: List[int] = []
    comps: List[List[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, indptr[root])]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, k = work[-1]
            if k < indptr[v + 1]:
                work[-1] = (v, k + 1)
                w = int(indices[k])
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, indptr[w]))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def is_irreducible(m) -> bool:
    if isinstance(m, OperatorSpec):
        m = m.pattern()
    return len(strongly_connected_components(m)) == 1


def theorem1_c_bound(a: SparseMatrix) -> float:
    """Upper limit on ``c`` for which ``I - cA`` inherits column dominance.

    Equal to ``1 / max |a_ij|`` over the nonzero entries.
    """
    biggest = a.abs_max()
    if biggest == 0.0:
        raise ValueError("matrix has no nonzero entry")
    return 1.0 / biggest


def _check_stochastic(p: SparseMatrix, tol: float = STOCHASTIC_TOL) -> None:
    if p.nnz and p.data.min() < 0:
        raise ValueError("stochastic matrix must be non-negative")
    sums = column_abs_sums(p)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ValueError(f"column {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")


def theorem2_check(p: SparseMatrix, alpha: float) -> ConditionReport:
    """Count per column the entries ``p_ji >= alpha / N`` and compare with ``N / 2``.

    ``satisfied`` requires every count above ``N / 2``.  ``weak`` accepts
    counts equal to ``N / 2`` when at least one column is strict and ``p``
    is irreducible.  Margins are ``count - N / 2``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_stochastic(p)
    n = p.n
    threshold = alpha / n
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        _, vals = p.column(i)
        counts[i] = int(np.count_nonzero(vals >= threshold))
    margins = counts - n / 2.0
    report = _strict_report(margins)
    weak = bool(np.all(margins >= 0) and np.any(margins > 0) and is_irreducible(p))
    return ConditionReport(report.satisfied, margins, report.witness, weak=weak)


def normalize_diagonal_sign(a: SparseMatrix, b) -> tuple:
    """Negate every row with a negative diagonal, together with its ``b`` entry."""
    b = np.array(as_vector(b, a.n, "b"))
    diag = a.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularDiagonalError(int(zero[0]))
    flip = np.where(diag < 0, -1.0, 1.0)
    if np.all(flip > 0):
        return a, b
    rows, cols, vals = [], [], []
    for j, i, v in a.triples():
        rows.append(j)
        cols.append(i)
        vals.append(v * flip[j])
    return SparseMatrix(a.n, rows, cols, vals), b * flip
