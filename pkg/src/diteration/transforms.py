"""Problem constructions and exact link elimination.

Every builder returns a :class:`FixedPointProblem` ``(P, F0)`` whose
solution of ``X = P X + F0`` is (after recovery) the solution of the
original system.  The elimination functions rewrite ``(P, F0)`` without
changing that solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .conditions import STOCHASTIC_TOL, SingularDiagonalError, _check_stochastic
from .core import FixedPointProblem, OperatorSpec, RankOne, SparseMatrix, as_vector, column_abs_sums


def _nonzero_diagonal(a: SparseMatrix) -> np.ndarray:
    diag = a.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularDiagonalError(int(zero[0]))
    return diag


def build_pc(a: SparseMatrix, b, c: float) -> FixedPointProblem:
    """``X = (I - cA) X + cB``."""
    if not c > 0:
        raise ValueError("c must be positive")
    b = as_vector(b, a.n, "b")
    rows, cols, vals = [], [], []
    diag_seen = np.zeros(a.n, dtype=bool)
    for j, i, v in a.triples():
        if i == j:
            diag_seen[i] = True
            rows.append(i)
            cols.append(i)
            vals.append(1.0 - c * v)
        else:
            rows.append(j)
            cols.append(i)
            vals.append(-c * v)
    for i in np.flatnonzero(~diag_seen):
        rows.append(int(i))
        cols.append(int(i))
        vals.append(1.0)
    op = SparseMatrix(a.n, rows, cols, vals)
    return FixedPointProblem(OperatorSpec(op), c * b, origin="pc")


def build_q(a: SparseMatrix, b) -> FixedPointProblem:
    """Row-scaled operator ``q_ij = -a_ij / a_ii`` with ``f0_i = b_i / a_ii``.

    Column sums of ``Q`` may exceed 1 even for column-dominant ``A``; the
    norm weighted by ``|a_ii|`` is contracted instead, so those weights
    are attached for the error bound.
    """
    b = as_vector(b, a.n, "b")
    diag = _nonzero_diagonal(a)
    triples = [(j, i, -v / diag[j]) for j, i, v in a.triples() if i != j]
    op = OperatorSpec(SparseMatrix.from_triples(a.n, triples))
    return FixedPointProblem(op, b / diag, origin="q", norm_weights=np.abs(diag))


def build_qprime(a: SparseMatrix, b) -> FixedPointProblem:
    """Column-scaled operator ``q'_ij = -a_ij / a_jj`` solving for ``x'_i = a_ii x_i``."""
    b = as_vector(b, a.n, "b")
    diag = _nonzero_diagonal(a)
    triples = [(j, i, -v / diag[i]) for j, i, v in a.triples() if i != j]
    return FixedPointProblem(
        OperatorSpec(SparseMatrix.from_triples(a.n, triples)), b, recover_scale=diag, origin="qprime"
    )


def build_pagerank(p: SparseMatrix, d: float, v=None) -> FixedPointProblem:
    """``X = d P X + (1 - d) V``; ``V`` defaults to uniform."""
    if not 0.0 < d < 1.0:
        raise ValueError("damping factor must lie in (0, 1)")
    n = p.n
    if p.nnz and p.data.min() < 0:
        raise ValueError("transition matrix must be non-negative")
    sums = column_abs_sums(p)
    if np.any(sums > 1.0 + STOCHASTIC_TOL):
        raise ValueError(f"column {int(np.argmax(sums))} sums above 1")
    v = np.full(n, 1.0 / n) if v is None else np.asarray(as_vector(v, n, "v"))
    if np.any(v < 0) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValueError("personalization vector must be non-negative and sum to 1")
    return FixedPointProblem(OperatorSpec(p.scale(d)), (1.0 - d) * v, origin="pagerank")


def build_eigen_shift(p: SparseMatrix, alpha: float = 1.0) -> FixedPointProblem:
    """Stationary vector of a column-stochastic ``p`` via ``X = (P - (alpha/N) J) X + (1/N) 1``.

    The fixed point of that equation is the stationary vector divided by
    ``alpha``; ``recover_scale`` undoes this so the reported solution sums
    to one.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_stochastic(p)
    n = p.n
    ones = np.ones(n)
    op = OperatorSpec(p, RankOne(-alpha / n, ones, ones))
    return FixedPointProblem(op, ones / n, recover_scale=np.full(n, 1.0 / alpha), origin="eigen")


def build_fixed(p: SparseMatrix, f0) -> FixedPointProblem:
    """Use ``p`` itself as the diffusion operator and ``f0`` as the initial fluid."""
    return FixedPointProblem(OperatorSpec(p), f0, origin="fixed")


def source_identity_problem(prob: FixedPointProblem) -> FixedPointProblem:
    """``(P, F0 - P F0)``, whose solution is ``F0`` itself."""
    from .core import matvec

    return prob.with_f0(prob.f0 - matvec(prob.operator, prob.f0))


# -- link elimination ------------------------------------------------------


@dataclass(frozen=True)
class DiagonalElim:
    node: int
    old_weight: float


@dataclass(frozen=True)
class LinkElim:
    source: int
    target: int
    old_weight: float


Step = Union[DiagonalElim, LinkElim]


@dataclass
class EliminationLog:
    steps: List[Step] = field(default_factory=list)
    fill_in: int = 0

    def __len__(self) -> int:
        return len(self.steps)


class DivergentEliminationError(ValueError):
    """A self-loop of weight >= 1 was met; the diffusion has no finite limit."""

    def __init__(self, node: int, weight: float, log: Optional[EliminationLog] = None):
        super().__init__(f"self-loop weight {weight!r} >= 1 at node {node}")
        self.node = node
        self.weight = weight
        self.log = log


class FillInLimitError(RuntimeError):
    def __init__(self, links: int, limit: int, log: EliminationLog):
        super().__init__(f"elimination grew the graph to {links} links (limit {limit})")
        self.links = links
        self.limit = limit
        self.log = log


class _LinkGraph:
    """Mutable column/row maps of a diffusion graph plus its fluid vector."""

    def __init__(self, prob: FixedPointProblem):
        if prob.operator.has_rank_one:
            raise ValueError("link elimination needs an explicit sparse operator")
        self.n = prob.n
        self.cols: List[Dict[int, float]] = [dict() for _ in range(self.n)]
        self.rows: List[Dict[int, float]] = [dict() for _ in range(self.n)]
        for j, i, v in prob.operator.sparse.triples():
            self.cols[i][j] = v
            self.rows[j][i] = v
        self.f0 = np.array(prob.f0, dtype=np.float64)
        self.recover_scale = prob.recover_scale
        self.origin = prob.origin
        self.links = prob.operator.sparse.nnz

    def _set(self, j: int, i: int, value: float) -> None:
        if value == 0.0:
            if j in self.cols[i]:
                del self.cols[i][j]
                del self.rows[j][i]
                self.links -= 1
            return
        if j not in self.cols[i]:
            self.links += 1
        self.cols[i][j] = value
        self.rows[j][i] = value

    def eliminate_diagonal(self, i: int) -> Optional[DiagonalElim]:
        pii = self.cols[i].get(i, 0.0)
        if pii == 0.0:
            return None
        if pii >= 1.0:
            raise DivergentEliminationError(i, pii)
        scale = 1.0 - pii
        self._set(i, i, 0.0)
        for src in sorted(self.rows[i]):
            self._set(i, src, self.rows[i][src] / scale)
        self.f0[i] = self.f0[i] / scale
        return DiagonalElim(i, pii)

    def eliminate_link(self, src: int, dst: int) -> Tuple[LinkElim, int]:
        if src == dst:
            raise ValueError("use eliminate_diagonal for self-loops")
        if self.cols[src].get(src, 0.0) != 0.0:
            raise ValueError(f"node {src} still has a self-loop")
        if dst not in self.cols[src]:
            raise ValueError(f"no link from {src} to {dst}")
        w = self.cols[src][dst]
        self._set(dst, src, 0.0)
        self.f0[dst] = self.f0[dst] + w * self.f0[src]
        touched = 0
        for origin in sorted(self.rows[src]):
            self._set(dst, origin, self.cols[origin].get(dst, 0.0) + w * self.rows[src][origin])
            touched += 1
        return LinkElim(src, dst, w), touched

    def problem(self) -> FixedPointProblem:
        triples = [(j, i, v) for i in range(self.n) for j, v in sorted(self.cols[i].items())]
        op = OperatorSpec(SparseMatrix.from_triples(self.n, triples))
        return FixedPointProblem(op, self.f0.copy(), self.recover_scale, self.origin)


def eliminate_diagonal(prob: FixedPointProblem, i: int) -> Tuple[FixedPointProblem, Optional[DiagonalElim]]:
    """Absorb the self-loop of node ``i``.

    Returns the new problem and the log step, or ``None`` when there was
    no self-loop.  Raises :class:`DivergentEliminationError` if ``p_ii >= 1``.
    """
    g = _LinkGraph(prob)
    step = g.eliminate_diagonal(i)
    return g.problem(), step


def eliminate_link(prob: FixedPointProblem, source: int, target: int) -> Tuple[FixedPointProblem, LinkElim]:
    """Remove the link ``source -> target``, rerouting through the in-links of ``source``."""
    g = _LinkGraph(prob)
    step, _ = g.eliminate_link(source, target)
    return g.problem(), step


def eliminate_all(
    prob: FixedPointProblem,
    order: Optional[Sequence[int]] = None,
    fill_limit: float = 50.0,
) -> Tuple[np.ndarray, EliminationLog]:
    """Eliminate every link, node by node, and read off the exact solution.

    For each node in ``order`` (ascending by default) the self-loop is
    absorbed and then each outgoing link is removed.  Once every node has
    been processed no links remain, so the fluid vector is the solution.
    """
    g = _LinkGraph(prob)
    order = range(g.n) if order is None else list(order)
    log = EliminationLog()
    limit = max(int(fill_limit * g.links), g.n)
    for node in order:
        try:
            step = g.eliminate_diagonal(node)
        except DivergentEliminationError as exc:
            exc.log = log
            raise
        if step is not None:
            log.steps.append(step)
        for dst in sorted(g.cols[node]):
            step, touched = g.eliminate_link(node, dst)
            log.steps.append(step)
            log.fill_in += touched
            if g.links > limit:
                raise FillInLimitError(g.links, limit, log)
    return prob.recover(g.f0), log


def replay(prob: FixedPointProblem, log: EliminationLog) -> FixedPointProblem:
    """Re-apply the steps of ``log`` to ``prob``."""
    g = _LinkGraph(prob)
    for step in log.steps:
        if isinstance(step, DiagonalElim):
            g.eliminate_diagonal(step.node)
        else:
            g.eliminate_link(step.source, step.target)
    return g.problem()
