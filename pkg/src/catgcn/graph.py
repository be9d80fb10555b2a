"""Sparse graph structure: CSR adjacency, symmetric normalization, L-hop propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """CSR matrix in canonical form: per row, column indices strictly ascending, no duplicates."""

    num_rows: int
    num_cols: int
    row_offsets: np.ndarray  # int64, length num_rows + 1, non-decreasing
    col_indices: np.ndarray  # int64, length nnz
    values: np.ndarray  # float64, length nnz

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_rows, self.num_cols))
        rows = np.repeat(np.arange(self.num_rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        return _csr_from_coo(
            self.col_indices,
            _expand_rows(self.row_offsets),
            self.values,
            self.num_cols,
            self.num_rows,
        )


@dataclass(frozen=True, eq=False)
class DegreeVector:
    """Self-loop-augmented degrees; every entry >= 1 because of the added self loop."""

    degrees: np.ndarray  # float64, length num_nodes


def _expand_rows(row_offsets: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(len(row_offsets) - 1, dtype=np.int64), np.diff(row_offsets))


def _csr_from_coo(rows, cols, vals, num_rows: int, num_cols: int) -> CsrMatrix:
    """Build canonical CSR from COO triplets. Duplicates must have been removed by the caller."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    offsets = np.zeros(num_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_rows), out=offsets[1:])
    return CsrMatrix(num_rows, num_cols, offsets, cols, vals)


def build_adjacency(edges, num_nodes: int) -> CsrMatrix:
    """Canonical symmetric binary adjacency from an undirected edge list.

    Self loops are dropped, duplicates (in either order) collapse to one
    undirected edge, and both (i,j) and (j,i) are stored.
    """
    if num_nodes < 1:
        raise ValueError(f"num_nodes must be >= 1, got {num_nodes}")
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        bad = e[(e < 0).any(axis=1) | (e >= num_nodes).any(axis=1)][0]
        raise ValueError(f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {num_nodes})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if e.size:
        e = np.unique(e, axis=0)
    both = np.concatenate([e, e[:, ::-1]]) if e.size else e
    return _csr_from_coo(
        both[:, 0] if both.size else [],
        both[:, 1] if both.size else [],
        np.ones(len(both)),
        num_nodes,
        num_nodes,
    )


def normalize_sym(adj: CsrMatrix) -> tuple[CsrMatrix, DegreeVector]:
    """Symmetrically normalized adjacency with self loops added.

    Entry (i, j) is 1/(sqrt(d_i)*sqrt(d_j)) where d are degrees after adding
    the self loop. The product commutes, so (i, j) and (j, i) are bit-equal.
    """
    if adj.num_rows != adj.num_cols:
        raise ValueError("adjacency must be square")
    rows = _expand_rows(adj.row_offsets)
    if np.any(rows == adj.col_indices):
        raise ValueError("adjacency must have a zero diagonal before self loops are added")
    t = adj.transpose()
    if not (
        np.array_equal(adj.row_offsets, t.row_offsets)
        and np.array_equal(adj.col_indices, t.col_indices)
        and np.array_equal(adj.values, t.values)
    ):
        raise ValueError("adjacency must be symmetric")

    n = adj.num_rows
    rows_aug = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols_aug = np.concatenate([adj.col_indices, np.arange(n, dtype=np.int64)])
    degrees = np.diff(adj.row_offsets).astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(degrees)
    vals = inv_sqrt[rows_aug] * inv_sqrt[cols_aug]
    norm = _csr_from_coo(rows_aug, cols_aug, vals, n, n)
    return norm, DegreeVector(degrees)


def spmm(m: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse @ dense. Per-row accumulation over ascending columns; bit-deterministic."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"dense operand must be 2-D, got shape {x.shape}")
    if m.num_cols != x.shape[0]:
        raise ValueError(f"dimension mismatch: {m.num_rows}x{m.num_cols} @ {x.shape}")
    out = np.zeros((m.num_rows, x.shape[1]))
    if m.nnz == 0:
        return out
    prod = m.values[:, None] * x[m.col_indices]
    counts = np.diff(m.row_offsets)
    nonempty = counts > 0
    starts = m.row_offsets[:-1][nonempty]
    # reduceat segments end at the next supplied start; empty rows own no
    # product slots, so each segment covers exactly one row's entries.
    out[nonempty] = np.add.reduceat(prod, starts, axis=0)
    return out


def propagate(norm_adj: CsrMatrix, h: np.ndarray, hops: int) -> np.ndarray:
    """Apply the normalized adjacency `hops` times: successive spmm, no materialized power."""
    if hops < 0:
        raise ValueError(f"hops must be >= 0, got {hops}")
    h = np.asarray(h, dtype=np.float64)
    if hops == 0:
        return h.copy()
    out = h
    for _ in range(hops):
        out = spmm(norm_adj, out)
    return out
