"""Baseline signal-based scorers: the closed-form linear autoencoder and
the truncated-SVD graph filter, plus the nonnegative hollow filter weights
used inside the hybrid model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import FactorizationError
from .sparse_core import (
    InteractionMatrix,
    degree_power,
    gram,
    mirror_upper,
    scale_rows_cols,
)

__all__ = [
    "EaseModel",
    "GraphFilterFactor",
    "GfcfModel",
    "fit_ease",
    "truncated_svd",
    "build_G",
    "score_gfcf",
]

# Relative singular-value cutoff below which components count as numerically
# zero rank.
_RANK_RTOL = 1e-10


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(matrix, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        diag = np.diagonal(matrix)
        raise FactorizationError(
            "SPD factorization failed "
            f"(n={matrix.shape[0]}, diag range [{diag.min()}, {diag.max()}]): {exc}"
        ) from exc
    inv = scipy.linalg.cho_solve(factor, np.eye(matrix.shape[0]), check_finite=False)
    return mirror_upper(inv)


@dataclass(frozen=True)
class EaseModel:
    """Closed-form linear autoencoder: item weights with a zero diagonal."""

    weights: object  # dense ndarray or csr_matrix, zero diagonal
    l2: float

    kind = "ease"

    @property
    def n_items(self) -> int:
        return self.weights.shape[0]

    def score_users(self, interactions: InteractionMatrix, users=None) -> np.ndarray:
        rows = interactions.matrix
        if users is not None:
            rows = rows[np.asarray(users, dtype=np.int64)]
        out = rows @ self.weights
        if sp.issparse(out):
            out = out.toarray()
        return np.asarray(out, dtype=np.float64)


def fit_ease(interactions: InteractionMatrix, l2: float) -> EaseModel:
    """Fit the linear autoencoder in closed form.

    With ``P = (R'R + l2 I)^-1`` the weights are
    ``C = I - P diag(1 / diag(P))``, the minimizer of the squared
    reconstruction error with ridge strength ``l2`` under the zero-diagonal
    constraint; the diagonal of ``C`` is exactly zero.
    """
    if l2 <= 0:
        raise ValueError("l2 must be strictly positive")
    g = gram(interactions, np.ones(interactions.n_users))
    idx = np.diag_indices_from(g)
    g[idx] += l2
    p = _spd_inverse(g)
    c = -p / np.diagonal(p)[None, :]
    np.fill_diagonal(c, 0.0)
    return EaseModel(c, float(l2))


@dataclass(frozen=True)
class GraphFilterFactor:
    """Top-k right singular factor of the degree-normalized interactions."""

    singular_vectors: np.ndarray  # items x rank, orthonormal columns
    singular_values: np.ndarray | None
    item_degrees: np.ndarray
    requested_rank: int
    truncated: bool = False

    @property
    def rank(self) -> int:
        return self.singular_vectors.shape[1]


@dataclass(frozen=True)
class GfcfModel:
    """Scoring wrapper around a graph filter factor."""

    factor: GraphFilterFactor
    seed: int = 0

    kind = "gfcf"

    @property
    def n_items(self) -> int:
        return self.factor.singular_vectors.shape[0]

    def score_users(self, interactions: InteractionMatrix, users=None) -> np.ndarray:
        return score_gfcf(interactions, self.factor, users=users)


def truncated_svd(
    interactions: InteractionMatrix,
    k: int,
    seed: int = 0,
    power_iters: int = 4,
    oversample: int = 10,
) -> GraphFilterFactor:
    """Top-k singular triplets of ``D_U^-1/2 R D_I^-1/2`` by randomized
    range finding.

    Deterministic given ``seed``: a fixed Gaussian test matrix, QR
    re-orthonormalized power iterations, and a small dense SVD. Components
    whose singular value falls below ``1e-10`` of the largest are dropped
    as numerically rank-deficient, with a warning and ``truncated=True``.
    Column signs are canonicalized so the largest-magnitude entry of each
    right singular vector is positive.
    """
    n_users, n_items = interactions.n_users, interactions.n_items
    min_dim = min(n_users, n_items)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > min_dim:
        raise ValueError(f"k={k} exceeds min(n_users, n_items)={min_dim}")
    a = scale_rows_cols(
        interactions.matrix,
        degree_power(interactions.user_degrees, -0.5),
        degree_power(interactions.item_degrees, -0.5),
    )
    n_probe = min(k + oversample, min_dim)
    rng = np.random.default_rng(seed)
    test = rng.standard_normal((n_items, n_probe))
    q, _ = np.linalg.qr(a @ test)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    small = (a.T @ q).T
    _, s, vt = np.linalg.svd(small, full_matrices=False)
    if s.size and s[0] > 0:
        achievable = int(np.count_nonzero(s > s[0] * _RANK_RTOL))
    else:
        achievable = 0
    k_eff = min(k, achievable)
    truncated = k_eff < k
    if truncated:
        warnings.warn(
            f"requested rank {k} exceeds the numerical rank; returning {k_eff} components",
            RuntimeWarning,
            stacklevel=2,
        )
    vectors = vt[:k_eff].T.copy()
    for col in range(k_eff):
        lead = int(np.argmax(np.abs(vectors[:, col])))
        if vectors[lead, col] < 0:
            vectors[:, col] = -vectors[:, col]
    return GraphFilterFactor(
        singular_vectors=vectors,
        singular_values=s[:k_eff].copy(),
        item_degrees=interactions.item_degrees.copy(),
        requested_rank=int(k),
        truncated=truncated,
    )


def build_G(
    factor: GraphFilterFactor,
    dense_threshold: int = 20000,
    nnz_budget: int | None = None,
    block_rows: int = 2048,
):
    """Nonnegative hollow filter weights from the singular factor.

    ``relu(V V' - diag(V V'))``: exactly symmetric, nonnegative, zero
    diagonal. Materialized dense up to ``dense_threshold`` items; above
    that it is assembled blockwise, keeping only the upper triangle and
    applying the stored-nnz budget with mirror entries counted in pairs.
    """
    v = factor.singular_vectors
    n = v.shape[0]
    if n <= dense_threshold:
        g = mirror_upper(v @ v.T)
        np.fill_diagonal(g, 0.0)
        np.maximum(g, 0.0, out=g)
        return g

    rows_parts, cols_parts, vals_parts = [], [], []
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        block = v[start:stop] @ v.T
        local_rows, local_cols = np.nonzero(block > 0.0)
        global_rows = local_rows + start
        upper = global_rows < local_cols
        rows_parts.append(global_rows[upper])
        cols_parts.append(local_cols[upper])
        vals_parts.append(block[local_rows[upper], local_cols[upper]])
        if nnz_budget is not None:
            rows_parts, cols_parts, vals_parts = [
                [part]
                for part in _prune_upper(
                    np.concatenate(rows_parts),
                    np.concatenate(cols_parts),
                    np.concatenate(vals_parts),
                    nnz_budget,
                )
            ]
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    full_rows = np.concatenate([rows, cols])
    full_cols = np.concatenate([cols, rows])
    full_vals = np.concatenate([vals, vals])
    out = sp.csr_matrix((full_vals, (full_rows, full_cols)), shape=(n, n))
    out.sort_indices()
    return out


def _prune_upper(rows, cols, vals, nnz_budget):
    """Keep upper-triangle entries worth at most ``nnz_budget`` stored
    values once mirrored (two per entry), ranked by (-|value|, row, col)."""
    limit = nnz_budget // 2
    if vals.size <= limit:
        return rows, cols, vals
    order = np.lexsort((cols, rows, -np.abs(vals)))[:limit]
    return rows[order], cols[order], vals[order]


def score_gfcf(
    interactions: InteractionMatrix, factor: GraphFilterFactor, users=None
) -> np.ndarray:
    """Graph-filter preference scores
    ``R D_I^-1/2 V V' D_I^1/2`` computed as a chain of scaled products,
    never materializing the item-item projector."""
    if factor.singular_vectors.shape[0] != interactions.n_items:
        raise ValueError("factor item dimension does not match the interactions")
    d = interactions.item_degrees
    rows = interactions.matrix
    if users is not None:
        rows = rows[np.asarray(users, dtype=np.int64)]
    down = rows.multiply(degree_power(d, -0.5)[None, :]).tocsr()
    v = factor.singular_vectors
    projected = (down @ v) @ v.T
    return projected * degree_power(d, 0.5)[None, :]
