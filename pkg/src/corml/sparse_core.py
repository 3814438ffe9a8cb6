"""Sparse matrix primitives shared by every model component.

All numeric work is in float64 with fixed reduction orders, so every
operation here is a pure function whose result does not depend on thread
count or call history. Square item-item matrices travel as
``scipy.sparse.csr_matrix`` (canonical form: sorted indices, no explicit
zeros) and dense blocks as ``numpy.ndarray``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "InteractionMatrix",
    "to_canonical_csr",
    "degree_power",
    "scale_rows_cols",
    "spmm",
    "gram",
    "sparsify",
]


def to_canonical_csr(matrix, shape=None) -> sp.csr_matrix:
    """Return a float64 CSR copy with sorted indices, summed duplicates and
    no stored zeros."""
    out = sp.csr_matrix(matrix, shape=shape, dtype=np.float64, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    out.eliminate_zeros()
    return out


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary user-by-item interactions with cached degree vectors.

    Every stored value is exactly 1.0, row indices are strictly increasing,
    ``user_degrees[u]`` equals the size of row ``u`` and ``item_degrees[i]``
    the number of rows containing item ``i``.
    """

    matrix: sp.csr_matrix
    user_degrees: np.ndarray
    item_degrees: np.ndarray

    @classmethod
    def from_csr(cls, matrix, n_users=None, n_items=None) -> "InteractionMatrix":
        shape = None
        if n_users is not None and n_items is not None:
            shape = (int(n_users), int(n_items))
        m = to_canonical_csr(matrix, shape=shape)
        if m.nnz and not np.all(m.data == 1.0):
            raise ValueError("interaction values must all be exactly 1.0")
        user_degrees = np.diff(m.indptr).astype(np.int64)
        item_degrees = np.bincount(m.indices, minlength=m.shape[1]).astype(np.int64)
        return cls(m, user_degrees, item_degrees)

    @classmethod
    def from_pairs(cls, pairs, n_users, n_items) -> "InteractionMatrix":
        """Build from an iterable of (user_index, item_index); duplicate
        pairs collapse to a single interaction."""
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if arr.size:
            arr = np.unique(arr, axis=0)
        coo = sp.coo_matrix(
            (np.ones(arr.shape[0]), (arr[:, 0], arr[:, 1])),
            shape=(int(n_users), int(n_items)),
        )
        return cls.from_csr(coo)

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_items(self, u: int) -> np.ndarray:
        """Item indices interacted with by user ``u`` (strictly increasing)."""
        m = self.matrix
        return m.indices[m.indptr[u] : m.indptr[u + 1]]

    def has_interaction(self, u: int, i: int) -> bool:
        row = self.row_items(u)
        pos = np.searchsorted(row, i)
        return pos < row.size and row[pos] == i

    def validate(self, require_nonempty_rows: bool = False) -> None:
        """Recheck structural invariants; raises ValueError on violation."""
        m = self.matrix
        if m.nnz and not np.all(m.data == 1.0):
            raise ValueError("stored values must all be 1.0")
        for u in range(m.shape[0]):
            row = m.indices[m.indptr[u] : m.indptr[u + 1]]
            if row.size > 1 and not np.all(np.diff(row) > 0):
                raise ValueError(f"row {u} has unsorted or duplicate item indices")
        if not np.array_equal(self.user_degrees, np.diff(m.indptr)):
            raise ValueError("user_degrees inconsistent with row sizes")
        if not np.array_equal(
            self.item_degrees, np.bincount(m.indices, minlength=m.shape[1])
        ):
            raise ValueError("item_degrees inconsistent with stored columns")
        if require_nonempty_rows and np.any(self.user_degrees == 0):
            raise ValueError("empty user rows are not allowed here")


def degree_power(degrees, exponent: float) -> np.ndarray:
    """Elementwise ``degrees ** exponent`` with the zero-degree policy.

    Zero degrees map to 0.0 under negative exponents (an item or user with
    no signal keeps score zero) instead of dividing by zero; ``0 ** 0`` is
    1.0 as usual.
    """
    d = np.asarray(degrees, dtype=np.float64)
    if not np.isfinite(exponent):
        raise ValueError("exponent must be finite")
    if d.size and np.any(d < 0):
        raise ValueError("degrees must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.power(d, float(exponent))
    if exponent < 0:
        out[d == 0.0] = 0.0
    return out


def scale_rows_cols(matrix, left, right):
    """Return ``diag(left) @ matrix @ diag(right)`` without forming the
    diagonal matrices; sparse input yields sparse output, dense stays dense.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if sp.issparse(matrix):
        if matrix.shape != (left.size, right.size):
            raise ValueError(
                f"scaling vectors {left.size}/{right.size} do not match shape {matrix.shape}"
            )
        out = matrix.tocsr(copy=True)
        row_of = np.repeat(np.arange(out.shape[0]), np.diff(out.indptr))
        out.data = out.data * left[row_of] * right[out.indices]
        return out
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (left.size, right.size):
        raise ValueError(
            f"scaling vectors {left.size}/{right.size} do not match shape {m.shape}"
        )
    return left[:, None] * m * right[None, :]


def spmm(a, b) -> np.ndarray:
    """Sparse-dense product ``a @ b`` as a dense float64 array."""
    if a.shape[1] != np.asarray(b).shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} @ {np.asarray(b).shape}")
    out = a @ np.asarray(b, dtype=np.float64)
    return np.asarray(out)


def gram(interactions: InteractionMatrix, row_scale) -> np.ndarray:
    """Weighted item co-occurrence ``R^T diag(row_scale) R`` as a dense
    matrix, exactly symmetric (upper triangle computed, then mirrored).

    Memory is ``n_items**2`` float64; callers are expected to keep the item
    count at a scale where that is acceptable.
    """
    s = np.asarray(row_scale, dtype=np.float64)
    if s.shape != (interactions.n_users,):
        raise ValueError("row_scale length must equal the user count")
    r = interactions.matrix
    weighted = r.multiply(s[:, None]).tocsr()
    full = (r.T @ weighted).toarray()
    upper = np.triu(full)
    return upper + np.triu(full, 1).T


def mirror_upper(matrix: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one for exact symmetry."""
    upper = np.triu(matrix)
    return upper + np.triu(matrix, 1).T


def sparsify(matrix, nnz_budget: int, symmetric: bool = False) -> sp.csr_matrix:
    """Keep only the ``nnz_budget`` largest-magnitude entries of a square
    matrix, equivalent to zeroing everything at or below the largest
    magnitude threshold that fits the budget.

    Ties at the cut resolve by (row, col) order so the result is
    reproducible. With ``symmetric=True`` the input must be exactly
    symmetric; unordered index pairs are ranked by (-|value|, min, max) and
    mirror entries are kept or dropped together, so symmetry survives the
    cut (a pair that would overshoot the budget by one entry is dropped).
    """
    if nnz_budget < 0:
        raise ValueError("nnz_budget must be nonnegative")
    coo = sp.coo_matrix(matrix)
    if coo.shape[0] != coo.shape[1]:
        raise ValueError("sparsify expects a square matrix")
    coo.sum_duplicates()
    mask = coo.data != 0.0
    rows, cols, vals = coo.row[mask], coo.col[mask], coo.data[mask]
    n = coo.shape[0]

    if vals.size <= nnz_budget:
        keep = slice(None)
    elif not symmetric:
        order = np.lexsort((cols, rows, -np.abs(vals)))
        keep = order[:nnz_budget]
    else:
        csr = sp.csr_matrix((vals, (rows, cols)), shape=coo.shape)
        if (csr != csr.T).nnz != 0:
            raise ValueError("symmetric sparsify requires a symmetric matrix")
        lo = np.minimum(rows, cols).astype(np.int64)
        hi = np.maximum(rows, cols).astype(np.int64)
        pair_id = lo * n + hi
        uniq, inverse = np.unique(pair_id, return_inverse=True)
        sizes = np.bincount(inverse)
        mag = np.zeros(uniq.size)
        np.maximum.at(mag, inverse, np.abs(vals))
        pair_lo, pair_hi = uniq // n, uniq % n
        order = np.lexsort((pair_hi, pair_lo, -mag))
        cum = np.cumsum(sizes[order])
        n_pairs = int(np.searchsorted(cum, nnz_budget, side="right"))
        kept_pairs = np.zeros(uniq.size, dtype=bool)
        kept_pairs[order[:n_pairs]] = True
        keep = kept_pairs[inverse]

    out = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=coo.shape)
    out.sort_indices()
    return out
