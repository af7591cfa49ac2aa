"""Matrix Market and edge-list readers/writers."""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .core import SparseMatrix

PathLike = Union[str, Path]


class FormatError(ValueError):
    def __init__(self, path, lineno: Optional[int], msg: str):
        where = f"{path}:{lineno}" if lineno else str(path)
        super().__init__(f"{where}: {msg}")
        self.lineno = lineno


class DanglingNodeWarning(UserWarning):
    """Nodes without out-links: the fluid norm only bounds the error from above."""


def _data_lines(path: PathLike):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            yield lineno, line.rstrip("\n")


def _parse_header(path, lineno, line) -> Tuple[str, str, str]:
    tokens = line.split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket" or tokens[1].lower() != "matrix":
        raise FormatError(path, lineno, "expected '%%MatrixMarket matrix <format> <field> <symmetry>' header")
    fmt, fld, sym = (t.lower() for t in tokens[2:])
    if fld == "pattern":
        raise FormatError(path, lineno, "real values required (pattern matrices are not supported)")
    if fld not in ("real", "integer", "double"):
        raise FormatError(path, lineno, f"unsupported field {fld!r}; real values required")
    if sym not in ("general", "symmetric", "skew-symmetric"):
        raise FormatError(path, lineno, f"unsupported symmetry {sym!r}")
    return fmt, fld, sym


def read_matrix_market(path: PathLike) -> SparseMatrix:
    """Read a square ``coordinate real`` matrix; symmetric storage is expanded."""
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise FormatError(path, None, "empty file") from None
    fmt, _, sym = _parse_header(path, lineno, header)
    if fmt != "coordinate":
        raise FormatError(path, lineno, "expected coordinate format for a matrix")
    size = None
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for lineno, line in lines:
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if size is None:
            try:
                m, n, nnz = (int(p) for p in parts)
            except ValueError:
                raise FormatError(path, lineno, f"bad size line {text!r}") from None
            if m != n:
                raise FormatError(path, lineno, f"matrix is {m}x{n}, not square")
            size = (n, nnz)
            continue
        if len(parts) != 3:
            raise FormatError(path, lineno, f"expected 'row col value', got {text!r}")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError(path, lineno, f"cannot parse entry {text!r}") from None
        if not (1 <= i <= size[0] and 1 <= j <= size[0]):
            raise FormatError(path, lineno, f"index ({i}, {j}) outside 1..{size[0]}")
        if not np.isfinite(v):
            raise FormatError(path, lineno, "non-finite value")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if sym != "general" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v if sym == "symmetric" else -v)
    if size is None:
        raise FormatError(path, None, "missing size line")
    declared = size[1]
    stored = len(vals) if sym == "general" else sum(1 for r, c in zip(rows, cols) if r >= c)
    if stored != declared:
        raise FormatError(path, None, f"declared {declared} entries, found {stored}")
    return SparseMatrix(size[0], rows, cols, vals)


def write_matrix_market(path: PathLike, m: SparseMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{m.n} {m.n} {m.nnz}\n")
        for j, i, v in m.triples():
            fh.write(f"{j + 1} {i + 1} {v:.17g}\n")


def read_vector(path: PathLike) -> np.ndarray:
    """Read a Matrix Market ``array`` column vector, or bare numbers one per line."""
    lines = list(_data_lines(path))
    if not lines:
        raise FormatError(path, None, "empty file")
    values: List[float] = []
    expect = None
    start = 0
    if lines[0][1].lstrip().lower().startswith("%%matrixmarket"):
        lineno, header = lines[0]
        fmt, _, _ = _parse_header(path, lineno, header)
        if fmt != "array":
            raise FormatError(path, lineno, "expected array format for a vector")
        start = 1
        expect = "size"
    for lineno, line in lines[start:]:
        text = line.strip()
        if not text or text.startswith("%") or text.startswith("#"):
            continue
        if expect == "size":
            parts = text.split()
            try:
                m, n = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise FormatError(path, lineno, f"bad size line {text!r}") from None
            if n != 1:
                raise FormatError(path, lineno, f"expected a single column, got {n}")
            expect = m
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise FormatError(path, lineno, f"cannot parse value {text!r}") from None
    if isinstance(expect, int) and len(values) != expect:
        raise FormatError(path, None, f"declared {expect} values, found {len(values)}")
    return np.array(values)


def write_vector(path: PathLike, v) -> None:
    v = np.asarray(v, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{v.size} 1\n")
        for x in v:
            fh.write(f"{x:.17g}\n")


def read_edge_list(path: PathLike, weight_mode: str = "uniform", n: Optional[int] = None) -> SparseMatrix:
    """Read ``src<TAB>dst[<TAB>weight]`` lines (0-based) into a diffusion matrix.

    ``uniform`` gives each out-link of ``i`` weight ``1 / outdeg(i)``,
    making every non-dangling column sum to 1; ``given`` uses the third
    column.  Nodes without out-links trigger a :class:`DanglingNodeWarning`.
    """
    if weight_mode not in ("uniform", "given"):
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    src: List[int] = []
    dst: List[int] = []
    wts: List[float] = []
    for lineno, line in _data_lines(path):
        text = line.strip()
        if not text or text.startswith("#") or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) not in (2, 3):
            raise FormatError(path, lineno, f"expected 'src dst [weight]', got {text!r}")
        try:
            s, d = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise FormatError(path, lineno, f"cannot parse edge {text!r}") from None
        if s < 0 or d < 0:
            raise FormatError(path, lineno, "node ids must be non-negative")
        if weight_mode == "uniform" and w is not None and w < 0:
            raise FormatError(path, lineno, "negative weight in uniform mode")
        if weight_mode == "given" and w is None:
            raise FormatError(path, lineno, "weight column required in given mode")
        src.append(s)
        dst.append(d)
        wts.append(1.0 if w is None else w)
    size = max(max(src, default=-1), max(dst, default=-1)) + 1
    if n is None:
        n = size
    elif n < size:
        raise ValueError(f"edge list references node {size - 1} but n={n}")
    if n < 1:
        raise FormatError(path, None, "no edges")
    src_arr = np.asarray(src, dtype=np.int64)
    if weight_mode == "uniform":
        outdeg = np.bincount(src_arr, minlength=n).astype(np.float64)
        vals = 1.0 / outdeg[src_arr] if src else np.zeros(0)
    else:
        vals = np.asarray(wts)
    m = SparseMatrix(n, dst, src, vals)
    dangling = np.flatnonzero(m.out_degrees == 0)
    if dangling.size:
        warnings.warn(
            f"{dangling.size} dangling node(s) (first: {int(dangling[0])}); "
            "the residual only bounds the error from above",
            DanglingNodeWarning,
            stacklevel=2,
        )
    return m
