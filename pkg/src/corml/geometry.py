"""Item-space distance geometry for signal-based recommenders.

A weight model ``W = hollow + omega * diag(diag_base)`` combines a
symmetric zero-diagonal item matrix with a diagonal completion.
``psd_completion_omega`` returns the smallest diagonal strength certified
by Gershgorin bounds, which makes ``W`` positive semidefinite and hence a
valid squared-distance weight. User features are degree-normalized
interaction signals and item features are scaled axes, so all distances
reduce to an expanded quadratic form over the sparse user row; ``W`` is
never materialized densely outside small test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .sparse_core import InteractionMatrix, degree_power, to_canonical_csr

__all__ = [
    "SignalFeatureSpace",
    "MetricWeight",
    "psd_completion_omega",
    "gershgorin_intervals",
    "mahalanobis_distance_sq",
    "distance_residual",
    "preference_residual",
    "preference_scores",
]

# Quadratic forms this far below zero are treated as exact zeros; anything
# lower means the weight matrix was not PSD.
_QUAD_FLOOR = -1e-9


def _as_hollow_csr(matrix) -> sp.csr_matrix:
    h = matrix if sp.issparse(matrix) else sp.csr_matrix(np.asarray(matrix, dtype=np.float64))
    h = h.tocsr()
    if h.shape[0] != h.shape[1]:
        raise ValueError("weight matrix must be square")
    return h


def _check_hollow_symmetric(h: sp.csr_matrix) -> None:
    if np.any(h.diagonal() != 0.0):
        raise ValueError("weight matrix must have an exactly zero diagonal")
    if (h != h.T).nnz != 0:
        raise ValueError("weight matrix must be symmetric")


def psd_completion_omega(hollow, diag_base) -> float:
    """Smallest Gershgorin-certified diagonal strength.

    Returns ``max_i (sum_j |hollow[i, j]|) / diag_base[i]``; adding
    ``omega * diag(diag_base)`` to ``hollow`` then yields a positive
    semidefinite matrix because every Gershgorin interval has a
    nonnegative lower end.
    """
    h = _as_hollow_csr(hollow)
    x = np.asarray(diag_base, dtype=np.float64)
    if x.shape != (h.shape[0],):
        raise ValueError("diag_base length must match the matrix dimension")
    if x.size and np.any(x <= 0.0):
        raise ValueError("diag_base must be strictly positive")
    _check_hollow_symmetric(h)
    if h.nnz == 0:
        return 0.0
    row_sums = np.asarray(abs(h).sum(axis=1)).ravel()
    return float(np.max(row_sums / x))


def gershgorin_intervals(matrix) -> list[tuple[float, float]]:
    """Per-row (center, radius) eigenvalue enclosures of a symmetric dense
    matrix; every eigenvalue lies in the union of the closed intervals."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.array_equal(a, a.T):
        raise ValueError("expected a symmetric matrix")
    centers = np.diagonal(a)
    radii = np.abs(a).sum(axis=1) - np.abs(centers)
    return list(zip(centers.tolist(), radii.tolist()))


@dataclass(frozen=True)
class SignalFeatureSpace:
    """Degree-normalized signal features over a fixed interaction matrix.

    User ``u``'s feature is the binary row scaled by ``d_i ** -strength``
    per item; item ``i``'s feature is its axis scaled by
    ``d_i ** strength``.
    """

    interactions: InteractionMatrix
    strength: float = 0.0

    @cached_property
    def item_scale(self) -> np.ndarray:
        return degree_power(self.interactions.item_degrees, self.strength)

    @cached_property
    def item_scale_inv(self) -> np.ndarray:
        return degree_power(self.interactions.item_degrees, -self.strength)

    @property
    def n_items(self) -> int:
        return self.interactions.n_items

    @property
    def n_users(self) -> int:
        return self.interactions.n_users

    def user_vector(self, u: int) -> np.ndarray:
        """Dense user feature (zeros away from interacted items)."""
        items = self.interactions.row_items(u)
        vec = np.zeros(self.n_items)
        vec[items] = self.item_scale_inv[items]
        return vec


@dataclass(frozen=True)
class MetricWeight:
    """Weight model ``W = hollow + omega * diag(diag_base)``.

    Built through :meth:`complete`, ``W`` is guaranteed PSD; constructing
    directly with a smaller ``omega`` forfeits that guarantee.
    """

    hollow: sp.csr_matrix
    omega: float
    diag_base: np.ndarray

    @classmethod
    def complete(cls, hollow, diag_base) -> "MetricWeight":
        h = to_canonical_csr(_as_hollow_csr(hollow))
        omega = psd_completion_omega(h, diag_base)
        return cls(h, omega, np.asarray(diag_base, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.hollow.shape[0]


def _check_index(name: str, idx: int, size: int) -> None:
    if not 0 <= idx < size:
        raise IndexError(f"{name} index {idx} out of range [0, {size})")


def _signal_products(space: SignalFeatureSpace, hollow, u: int):
    """User feature and its image under the hollow weight matrix."""
    _check_index("user", u, space.n_users)
    pu = space.user_vector(u)
    hp = np.asarray(hollow @ pu).ravel()
    return pu, hp


def mahalanobis_distance_sq(
    space: SignalFeatureSpace, weight: MetricWeight, u: int, i: int
) -> float:
    """Squared generalized distance between user ``u`` and item ``i``.

    Evaluated as the expanded quadratic form
    ``p'Wp + q'Wq - 2 p'Wq`` over the sparse user row. Values inside
    the numerical floor ``[-1e-9, 0)`` clamp to zero; anything lower
    raises, because the completed weight matrix should be PSD.
    """
    _check_index("item", i, space.n_items)
    if weight.n != space.n_items:
        raise ValueError("weight dimension does not match the item count")
    pu, hp = _signal_products(space, weight.hollow, u)
    x = weight.diag_base
    om = weight.omega
    items = space.interactions.row_items(u)
    pvals = pu[items]
    pu_quad = float(pu @ hp) + om * float(x[items] @ (pvals * pvals))
    qi_quad = om * x[i] * space.item_scale[i] ** 2
    r_ui = 1.0 if space.interactions.has_interaction(u, i) else 0.0
    cross = space.item_scale[i] * hp[i] + om * x[i] * r_ui
    quad = pu_quad + qi_quad - 2.0 * cross
    if quad < _QUAD_FLOOR:
        raise ValueError(f"quadratic form {quad} below the PSD floor; weight not PSD")
    return max(quad, 0.0)


def distance_residual(
    space: SignalFeatureSpace, weight: MetricWeight, u: int, i: int, j: int
) -> float:
    """Difference of squared distances ``d2(u, i) - d2(u, j)``.

    Computed from the expanded form
    ``W_ii (s_i^2 - 2 R_ui) - W_jj (s_j^2 - 2 R_uj) - 2 (y_ui - y_uj)``
    where ``s`` is the item feature scale and ``y`` the hollow-part
    preference score, so no per-item quadratic terms are rebuilt.
    """
    _check_index("item", i, space.n_items)
    _check_index("item", j, space.n_items)
    if weight.n != space.n_items:
        raise ValueError("weight dimension does not match the item count")
    _, hp = _signal_products(space, weight.hollow, u)
    x = weight.diag_base
    om = weight.omega
    inter = space.interactions
    r_ui = 1.0 if inter.has_interaction(u, i) else 0.0
    r_uj = 1.0 if inter.has_interaction(u, j) else 0.0
    y_i = space.item_scale[i] * hp[i]
    y_j = space.item_scale[j] * hp[j]
    term_i = om * x[i] * (space.item_scale[i] ** 2 - 2.0 * r_ui)
    term_j = om * x[j] * (space.item_scale[j] ** 2 - 2.0 * r_uj)
    return term_i - term_j - 2.0 * (y_i - y_j)


def preference_residual(space: SignalFeatureSpace, hollow, u: int, i: int, j: int) -> float:
    """Score difference ``y_ui - y_uj`` of the hollow-weight signal model."""
    _check_index("item", i, space.n_items)
    _check_index("item", j, space.n_items)
    _, hp = _signal_products(space, hollow, u)
    return float(space.item_scale[i] * hp[i] - space.item_scale[j] * hp[j])


def preference_scores(space: SignalFeatureSpace, hollow, u: int) -> np.ndarray:
    """All item scores of user ``u`` under a hollow item-weight matrix."""
    _, hp = _signal_products(space, hollow, u)
    return space.item_scale * hp
