"""Sparse matrix, operator and problem types.

Index convention: entry ``(j, i)`` holds ``p_ji``, the weight of the edge
from node ``i`` to node ``j``.  Column ``i`` therefore lists the out-links
of ``i`` and row ``j`` lists the in-links of ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Optional, Tuple

import numpy as np
from scipy import sparse


def as_vector(values, n: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a finite, read-only float64 array."""
    arr = np.array(values, dtype=np.float64).ravel()
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


class SparseMatrix:
    """Immutable square sparse matrix stored by columns.

    Duplicate ``(row, col)`` pairs are summed on construction and entries
    that end up exactly zero are dropped.  A row view for in-link queries
    is built on first use.
    """

    def __init__(self, n: int, rows, cols, vals):
        n = int(n)
        if n < 1:
            raise ValueError("matrix dimension must be >= 1")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise IndexError("entry index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("matrix contains non-finite entries")
        csc = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        csc.sum_duplicates()
        csc.eliminate_zeros()
        csc.sort_indices()
        self._n = n
        self._csc = csc
        for arr in (csc.indptr, csc.indices, csc.data):
            arr.flags.writeable = False

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError("expected a square 2-d array")
        rows, cols = np.nonzero(dense)
        return cls(dense.shape[0], rows, cols, dense[rows, cols])

    @classmethod
    def from_triples(cls, n: int, triples: Iterable[Tuple[int, int, float]]) -> "SparseMatrix":
        triples = list(triples)
        if not triples:
            return cls.zeros(n)
        rows, cols, vals = zip(*triples)
        return cls(n, rows, cols, vals)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        coo = sparse.coo_matrix(mat)
        if coo.shape[0] != coo.shape[1]:
            raise ValueError("expected a square matrix")
        return cls(coo.shape[0], coo.row, coo.col, coo.data)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, idx, idx, np.ones(n))

    @classmethod
    def zeros(cls, n: int) -> "SparseMatrix":
        return cls(n, [], [], [])

    @classmethod
    def diagonal_matrix(cls, diag) -> "SparseMatrix":
        diag = np.asarray(diag, dtype=np.float64)
        idx = np.arange(diag.size)
        return cls(diag.size, idx, idx, diag)

    # -- basic queries ----------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def nnz(self) -> int:
        return int(self._csc.nnz)

    @property
    def indptr(self) -> np.ndarray:
        return self._csc.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csc.indices

    @property
    def data(self) -> np.ndarray:
        return self._csc.data

    def column(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Out-links of node ``i`` as ``(target rows, weights)``."""
        lo, hi = self._csc.indptr[i], self._csc.indptr[i + 1]
        return self._csc.indices[lo:hi], self._csc.data[lo:hi]

    @cached_property
    def _csr(self):
        csr = self._csc.tocsr()
        csr.sort_indices()
        for arr in (csr.indptr, csr.indices, csr.data):
            arr.flags.writeable = False
        return csr

    def row(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """In-links of node ``j`` as ``(source columns, weights)``."""
        csr = self._csr
        lo, hi = csr.indptr[j], csr.indptr[j + 1]
        return csr.indices[lo:hi], csr.data[lo:hi]

    @cached_property
    def out_degrees(self) -> np.ndarray:
        deg = np.diff(self._csc.indptr).astype(np.int64)
        deg.flags.writeable = False
        return deg

    @cached_property
    def in_degrees(self) -> np.ndarray:
        deg = np.diff(self._csr.indptr).astype(np.int64)
        deg.flags.writeable = False
        return deg

    def get(self, row: int, col: int) -> float:
        rows, vals = self.column(col)
        k = np.searchsorted(rows, row)
        if k < rows.size and rows[k] == row:
            return float(vals[k])
        return 0.0

    def diagonal(self) -> np.ndarray:
        return self._csc.diagonal().astype(np.float64)

    def triples(self) -> Iterator[Tuple[int, int, float]]:
        """Yield ``(row, col, value)`` in column-major order."""
        for i in range(self._n):
            rows, vals = self.column(i)
            for j, v in zip(rows.tolist(), vals.tolist()):
                yield j, i, v

    def row_triples(self) -> Iterator[Tuple[int, int, float]]:
        """Yield ``(row, col, value)`` read through the row view."""
        for j in range(self._n):
            cols, vals = self.row(j)
            for i, v in zip(cols.tolist(), vals.tolist()):
                yield j, i, v

    def to_dense(self) -> np.ndarray:
        return self._csc.toarray()

    def to_scipy(self) -> sparse.csc_matrix:
        return self._csc.copy()

    def abs_max(self) -> float:
        return float(np.abs(self._csc.data).max()) if self.nnz else 0.0

    # -- algebra ----------------------------------------------------------

    def scale(self, factor: float) -> "SparseMatrix":
        coo = self._csc.tocoo()
        return SparseMatrix(self._n, coo.row, coo.col, coo.data * factor)

    def transpose(self) -> "SparseMatrix":
        coo = self._csc.tocoo()
        return SparseMatrix(self._n, coo.col, coo.row, coo.data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Column-by-column product in ascending index order."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._n,):
            raise ValueError(f"vector has shape {x.shape}, expected ({self._n},)")
        y = np.zeros(self._n)
        indptr, indices, data = self._csc.indptr, self._csc.indices, self._csc.data
        for i in range(self._n):
            xi = x[i]
            if xi == 0.0:
                continue
            lo, hi = indptr[i], indptr[i + 1]
            if lo != hi:
                y[indices[lo:hi]] += data[lo:hi] * xi
        return y

    def same_entries(self, other: "SparseMatrix") -> bool:
        return self._n == other._n and list(self.triples()) == list(other.triples())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return self.same_entries(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseMatrix(n={self._n}, nnz={self.nnz})"


@dataclass(frozen=True)
class RankOne:
    """The term ``sigma * u * v^T`` of an operator, kept implicit."""

    sigma: float
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """A diffusion operator: ``sparse + sigma * u * v^T``."""

    sparse: SparseMatrix
    rank_one: Optional[RankOne] = None

    def __post_init__(self):
        if self.rank_one is not None:
            n = self.sparse.n
            r1 = self.rank_one
            object.__setattr__(
                self,
                "rank_one",
                RankOne(float(r1.sigma), as_vector(r1.u, n, "u"), as_vector(r1.v, n, "v")),
            )

    @classmethod
    def of(cls, m: SparseMatrix) -> "OperatorSpec":
        return cls(m)

    @property
    def n(self) -> int:
        return self.sparse.n

    @property
    def has_rank_one(self) -> bool:
        return self.rank_one is not None and self.rank_one.sigma != 0.0

    def rank_one_weight(self, i: int) -> float:
        """Scalar multiplying ``u`` in column ``i`` of the rank-one term."""
        if not self.has_rank_one:
            return 0.0
        return self.rank_one.sigma * float(self.rank_one.v[i])

    def effective_column(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Nonzero entries of column ``i`` of the full operator."""
        rows, vals = self.sparse.column(i)
        w = self.rank_one_weight(i)
        if w == 0.0:
            return rows, vals
        col = w * self.rank_one.u
        col[rows] += vals
        nz = np.flatnonzero(col)
        return nz, col[nz]

    def to_dense(self) -> np.ndarray:
        dense = self.sparse.to_dense()
        if self.has_rank_one:
            r1 = self.rank_one
            dense = dense + r1.sigma * np.outer(r1.u, r1.v)
        return dense

    def pattern(self) -> SparseMatrix:
        """The effective operator's nonzero pattern, as a sparse matrix."""
        if not self.has_rank_one:
            return self.sparse
        rows, cols, vals = [], [], []
        for i in range(self.n):
            r, v = self.effective_column(i)
            rows.append(r)
            cols.append(np.full(r.size, i))
            vals.append(v)
        return SparseMatrix(self.n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

    @cached_property
    def column_lists(self):
        """Sparse columns as ``(rows, vals)`` Python lists, for scalar loops."""
        m = self.sparse
        return [tuple(a.tolist() for a in m.column(i)) for i in range(self.n)]

    @cached_property
    def costs(self):
        """Links used by one diffusion of each node (rank-one part counts ``n``)."""
        extra = self.n if self.has_rank_one else 0
        return [d + extra for d in self.sparse.out_degrees.tolist()]

    @cached_property
    def degrees(self) -> Tuple[np.ndarray, np.ndarray]:
        return degrees(self.pattern())

    @cached_property
    def nnz(self) -> int:
        return self.pattern().nnz

    @cached_property
    def rho(self) -> float:
        """Largest column absolute sum."""
        return float(column_abs_sums(self).max())


@dataclass(frozen=True, eq=False)
class FixedPointProblem:
    """The pair ``(P, F0)`` whose solution solves ``X = P X + F0``.

    When ``recover_scale`` is set, the reported solution is the fixed
    point divided entrywise by it.  ``norm_weights`` names a positive
    weighting ``w`` under which the operator contracts the norm
    ``sum_i w_i |x_i|`` even if its plain column sums do not drop below 1.
    """

    operator: OperatorSpec
    f0: np.ndarray
    recover_scale: Optional[np.ndarray] = None
    origin: str = "fixed"
    norm_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        op = self.operator
        if isinstance(op, SparseMatrix):
            op = OperatorSpec(op)
            object.__setattr__(self, "operator", op)
        object.__setattr__(self, "f0", as_vector(self.f0, op.n, "f0"))
        if self.recover_scale is not None:
            scale = as_vector(self.recover_scale, op.n, "recover_scale")
            if np.any(scale == 0.0):
                raise ValueError("recover_scale entries must be nonzero")
            object.__setattr__(self, "recover_scale", scale)
        if self.norm_weights is not None:
            w = as_vector(self.norm_weights, op.n, "norm_weights")
            if np.any(w <= 0.0):
                raise ValueError("norm_weights must be positive")
            object.__setattr__(self, "norm_weights", w)

    @property
    def n(self) -> int:
        return self.operator.n

    def recover(self, h: np.ndarray) -> np.ndarray:
        if self.recover_scale is None:
            return np.array(h, dtype=np.float64)
        return np.asarray(h, dtype=np.float64) / self.recover_scale

    def with_f0(self, f0) -> "FixedPointProblem":
        return FixedPointProblem(self.operator, f0, self.recover_scale, self.origin, self.norm_weights)


def matvec(op, x) -> np.ndarray:
    """Apply ``op`` to ``x``: the sparse part column by column, then the rank-one part."""
    if isinstance(op, SparseMatrix):
        op = OperatorSpec(op)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.n,):
        raise ValueError(f"vector has shape {x.shape}, expected ({op.n},)")
    y = op.sparse.matvec(x)
    if op.has_rank_one:
        r1 = op.rank_one
        y += (r1.sigma * float(r1.v @ x)) * r1.u
    return y


def column_abs_sums(op, weights=None) -> np.ndarray:
    """Per-column sum of absolute values of the effective operator.

    With ``weights``, entry ``(j, i)`` counts as ``weights[j] * |p_ji|``.
    """
    if isinstance(op, SparseMatrix):
        op = OperatorSpec(op)
    m = op.sparse
    wt = np.ones(op.n) if weights is None else np.asarray(weights, dtype=np.float64)
    sums = np.zeros(op.n)
    if not op.has_rank_one:
        np.add.at(sums, np.repeat(np.arange(op.n), m.out_degrees), np.abs(m.data) * wt[m.indices])
        return sums
    u = op.rank_one.u
    u_l1 = float((wt * np.abs(u)).sum())
    for i in range(op.n):
        rows, vals = m.column(i)
        w = op.rank_one_weight(i)
        outside = u_l1 - float((wt[rows] * np.abs(u[rows])).sum())
        sums[i] = abs(w) * outside + float((wt[rows] * np.abs(vals + w * u[rows])).sum())
    return sums


def degrees(m) -> Tuple[np.ndarray, np.ndarray]:
    """Structural ``(in_degrees, out_degrees)`` per node."""
    if isinstance(m, OperatorSpec):
        return m.degrees
    return m.in_degrees.copy(), m.out_degrees.copy()
