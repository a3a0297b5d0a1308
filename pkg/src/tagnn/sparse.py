"""Minimal CSR sparse matrix used for snapshot adjacencies and block patterns.

Matrices are binary unless ``values`` is set: a ``None`` values array means
every stored entry equals one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SparseCsr:
    """Compressed sparse row matrix over int64 index arrays.

    Invariants (enforced by :meth:`validate`): ``row_offsets`` has length
    ``n_rows + 1``, is nondecreasing and starts at 0; column indices are
    sorted and unique within each row and lie in ``[0, n_cols)``.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray | None = field(default=None)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    def validate(self) -> None:
        off, cols = self.row_offsets, self.col_indices
        if off.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if off[0] != 0 or off[-1] != cols.shape[0]:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for r in range(self.n_rows):
            row = cols[off[r]:off[r + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise ValueError(f"row {r}: column indices not sorted/unique")
        if self.values is not None and self.values.shape != cols.shape:
            raise ValueError("values must match col_indices in length")

    def row(self, r: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[r]:self.row_offsets[r + 1]]

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), self.row_degrees())
        vals = self.values if self.values is not None else 1.0
        dense[rows, self.col_indices] = vals
        return dense

    def has_entry(self, r: int, c: int) -> bool:
        row = self.row(r)
        i = np.searchsorted(row, c)
        return bool(i < row.size and row[i] == c)


def csr_from_edges(n: int, u: np.ndarray, v: np.ndarray) -> SparseCsr:
    """Symmetric binary CSR from undirected edge endpoints (duplicates collapsed).

    Self edges (``u == v``) are rejected; snapshot adjacencies have zero diagonal.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
        raise ValueError("edge endpoint out of range")
    if np.any(u == v):
        raise ValueError("self edge not allowed in snapshot adjacency")
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if src.size:
        keep = np.concatenate([[True], (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])])
        src, dst = src[keep], dst[keep]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return SparseCsr(n, n, offsets, dst)


def identity_csr(n: int) -> SparseCsr:
    idx = np.arange(n, dtype=np.int64)
    return SparseCsr(n, n, np.arange(n + 1, dtype=np.int64), idx)


def add_self_loops(adj: SparseCsr) -> SparseCsr:
    """Return ``adj + I``; every row gains exactly one diagonal entry."""
    n = adj.n_rows
    degs = adj.row_degrees()
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degs + 1, out=offsets[1:])
    cols = np.empty(adj.nnz + n, dtype=np.int64)
    for r in range(n):
        row = adj.row(r)
        pos = np.searchsorted(row, r)
        out = offsets[r]
        cols[out:out + pos] = row[:pos]
        cols[out + pos] = r
        cols[out + pos + 1:offsets[r + 1]] = row[pos:]
    return SparseCsr(n, n, offsets, cols)
