"""Hybrid item-weight model trained with ADMM.

The training objective is quadratic in the hollow item-weight matrix once
the per-user scaling is fixed, so the Hessian is assembled once in item
space, inverted via Cholesky, and each ADMM sweep is: a hollow-constrained
ridge solve (per-column Lagrange correction for the zero diagonal), a
degree-weighted Lyapunov symmetrization with a nonnegativity clamp, and a
scaled dual ascent. The consensus iterate is always feasible (symmetric,
nonnegative, zero diagonal up to round-off), and the returned weights are
the final consensus, diagonal zeroed exactly, optionally sparsified under
a stored-nnz budget with symmetric tie-breaking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConvergenceWarning, FactorizationError
from .signal_models import GraphFilterFactor, build_G, truncated_svd
from .sparse_core import (
    InteractionMatrix,
    degree_power,
    gram,
    mirror_upper,
    scale_rows_cols,
    sparsify,
    to_canonical_csr,
)

__all__ = [
    "CoRMLHyperparams",
    "CoRMLModel",
    "AdmmState",
    "HStepCache",
    "compute_phi",
    "exact_ranking_weights",
    "approx_ranking_weights",
    "corml_loss",
    "hybrid_scores",
    "fit_corml",
    "build_h_step_cache",
    "admm_h_step",
    "admm_z_step",
    "admm_dual_step",
    "lyapunov_symmetrize",
]


@dataclass(frozen=True)
class CoRMLHyperparams:
    """Training configuration.

    ``t`` is the item normalization strength, ``t_u`` the user-degree
    scaling exponent, ``epsilon`` the global score scaling, ``theta`` the
    degree-weighted ridge strength, ``lam`` the mix between the learned
    item weights and the graph-filter branch, ``rank`` the SVD rank, and
    ``rho``/``max_iters``/``tol`` the ADMM penalty, iteration cap and
    residual tolerance.
    """

    t: float = 0.05
    t_u: float = 0.5
    epsilon: float = 0.1
    theta: float = 0.1
    lam: float = 0.7
    rank: int = 64
    rho: float = 5.0
    max_iters: int = 50
    tol: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        for name in ("epsilon", "theta", "rho", "tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not np.isfinite(self.t) or not np.isfinite(self.t_u):
            raise ValueError("t and t_u must be finite")


def compute_phi(user_degrees, epsilon: float, t_u: float) -> np.ndarray:
    """Per-user score scaling ``epsilon * (d_u / max d) ** -t_u``.

    The maximum-degree user gets exactly ``epsilon``. Zero-degree users
    (whose score rows are identically zero) also get ``epsilon`` rather
    than the infinity the formula would produce.
    """
    d = np.asarray(user_degrees, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError("epsilon must be strictly positive")
    if d.size == 0 or np.all(d == 0):
        raise ValueError("at least one user must have a positive degree")
    ratio = d / d.max()
    ratio[d == 0] = 1.0
    return epsilon * np.power(ratio, -t_u)


def exact_ranking_weights(scores_u, interacted) -> tuple[np.ndarray, np.ndarray]:
    """Rank-count loss weights for one user.

    For interacted items, the weight is minus the fraction of uninteracted
    items scored strictly above; for uninteracted items, the fraction of
    interacted items scored strictly below. Ties contribute nothing.
    Both outputs align with the ascending item indices of their group.
    """
    y = np.asarray(scores_u, dtype=np.float64)
    pos = np.unique(np.asarray(list(interacted), dtype=np.int64))
    if pos.size == 0:
        raise ValueError("interacted set must be nonempty")
    if pos.size >= y.size:
        raise ValueError("uninteracted set must be nonempty")
    mask = np.zeros(y.size, dtype=bool)
    mask[pos] = True
    neg = np.flatnonzero(~mask)
    y_pos, y_neg = y[pos], y[neg]
    neg_sorted = np.sort(y_neg)
    pos_sorted = np.sort(y_pos)
    above = y_neg.size - np.searchsorted(neg_sorted, y_pos, side="right")
    alpha = -above / y_neg.size
    below = np.searchsorted(pos_sorted, y_neg, side="left")
    beta = below / y_pos.size
    return alpha, beta


def approx_ranking_weights(
    scores_u, interacted, phi_u: float
) -> tuple[np.ndarray, np.ndarray]:
    """Affine-in-score stand-ins for the rank-count weights:
    ``phi*y - 1`` on interacted items and ``phi*y`` on uninteracted ones,
    aligned with ascending item indices per group."""
    if phi_u <= 0:
        raise ValueError("phi_u must be strictly positive")
    y = np.asarray(scores_u, dtype=np.float64)
    pos = np.unique(np.asarray(list(interacted), dtype=np.int64))
    mask = np.zeros(y.size, dtype=bool)
    mask[pos] = True
    neg = np.flatnonzero(~mask)
    return phi_u * y[pos] - 1.0, phi_u * y[neg]


def corml_loss(scores: np.ndarray, interactions: InteractionMatrix, phi) -> float:
    """Pointwise training loss ``sum_ui y_ui (phi_u y_ui - R_ui)``."""
    y = np.asarray(scores, dtype=np.float64)
    if y.shape != interactions.matrix.shape:
        raise ValueError("scores shape does not match the interaction matrix")
    phi = np.asarray(phi, dtype=np.float64)
    quad = float(np.einsum("ui,u->", y * y, phi))
    m = interactions.matrix
    row_of = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    observed = float(y[row_of, m.indices].sum())
    return quad - observed


def _dense_product(rows: sp.csr_matrix, matrix) -> np.ndarray:
    out = rows @ matrix
    if sp.issparse(out):
        out = out.toarray()
    return np.asarray(out, dtype=np.float64)


def hybrid_scores(
    interactions: InteractionMatrix,
    item_weights,
    graph,
    lam: float,
    t: float,
    item_degrees=None,
    users=None,
) -> np.ndarray:
    """Preference scores mixing the learned item weights with the graph
    filter branch:
    ``R (lam * D^-t H D^t + (1-lam) * D^-1/2 G D^1/2)``.

    ``graph`` may be a dense/sparse matrix or a
    :class:`~corml.signal_models.GraphFilterFactor` (materialized on the
    fly). Items with zero training degree always score 0.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    d = np.asarray(
        interactions.item_degrees if item_degrees is None else item_degrees,
        dtype=np.float64,
    )
    if d.shape != (interactions.n_items,):
        raise ValueError("item_degrees length does not match the interactions")
    rows = interactions.matrix
    if users is not None:
        rows = rows[np.asarray(users, dtype=np.int64)]
    out = np.zeros((rows.shape[0], interactions.n_items))
    if lam > 0.0:
        if item_weights is None:
            raise ValueError("item_weights must be provided when lam > 0")
        if item_weights.shape != (interactions.n_items, interactions.n_items):
            raise ValueError("item_weights shape does not match the item count")
        down = rows.multiply(degree_power(d, -t)[None, :]).tocsr()
        out += lam * (_dense_product(down, item_weights) * degree_power(d, t)[None, :])
    if lam < 1.0:
        if isinstance(graph, GraphFilterFactor):
            graph = build_G(graph)
        if graph is None:
            raise ValueError("graph weights must be provided when lam < 1")
        if graph.shape != (interactions.n_items, interactions.n_items):
            raise ValueError("graph shape does not match the item count")
        down = rows.multiply(degree_power(d, -0.5)[None, :]).tocsr()
        out += (1.0 - lam) * (
            _dense_product(down, graph) * degree_power(d, 0.5)[None, :]
        )
    out[:, d == 0.0] = 0.0
    return out


@dataclass
class AdmmState:
    """Mutable ADMM iterate: primal weights, feasible consensus copy,
    scaled dual, and the latest residuals."""

    weights: np.ndarray
    consensus: np.ndarray
    dual: np.ndarray
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf

    @classmethod
    def zeros(cls, n: int) -> "AdmmState":
        return cls(np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n)))


@dataclass(frozen=True)
class HStepCache:
    """Cached solve operator for the quadratic-plus-penalty step: the
    explicit inverse of ``hessian + rho I`` plus its diagonal."""

    inverse: np.ndarray
    inverse_diag: np.ndarray
    rho: float


def build_h_step_cache(hessian_with_penalty: np.ndarray, rho: float) -> HStepCache:
    """Factor the penalized Hessian once; reused across all iterations."""
    try:
        factor = scipy.linalg.cho_factor(
            hessian_with_penalty, lower=True, check_finite=False
        )
    except scipy.linalg.LinAlgError as exc:
        diag = np.diagonal(hessian_with_penalty)
        raise FactorizationError(
            "Hessian factorization failed "
            f"(n={hessian_with_penalty.shape[0]}, diag range "
            f"[{diag.min()}, {diag.max()}]): {exc}"
        ) from exc
    inverse = scipy.linalg.cho_solve(
        factor, np.eye(hessian_with_penalty.shape[0]), check_finite=False
    )
    inverse = mirror_upper(inverse)
    return HStepCache(inverse, np.diagonal(inverse).copy(), float(rho))


def admm_h_step(state: AdmmState, cache: HStepCache, linear_term: np.ndarray) -> np.ndarray:
    """Minimize the quadratic plus the proximity penalty subject to a zero
    diagonal: unconstrained ridge solve, then a per-column multiplier
    correction that zeroes the diagonal exactly."""
    rhs = cache.rho * (state.consensus - state.dual) - linear_term
    unconstrained = cache.inverse @ rhs
    multipliers = np.diagonal(unconstrained) / cache.inverse_diag
    corrected = unconstrained - cache.inverse * multipliers[None, :]
    np.fill_diagonal(corrected, 0.0)
    return corrected


def lyapunov_symmetrize(matrix: np.ndarray, weights) -> np.ndarray:
    """Elementwise solution ``Z`` of ``A Z + Z A = A M + M' A`` with
    ``A = diag(weights)``: the weighted symmetrization
    ``(a_i M_ij + a_j M_ji) / (a_i + a_j)``. Index pairs whose weights both
    vanish fall back to the plain average. The result is bitwise symmetric.
    """
    a = np.asarray(weights, dtype=np.float64)
    if np.any(a < 0):
        raise ValueError("symmetrization weights must be nonnegative")
    denom = a[:, None] + a[None, :]
    numer = a[:, None] * matrix + a[None, :] * matrix.T
    safe = np.where(denom > 0.0, denom, 1.0)
    out = numer / safe
    if np.any(denom == 0.0):
        fallback = 0.5 * (matrix + matrix.T)
        out = np.where(denom > 0.0, out, fallback)
    return out


def admm_z_step(state: AdmmState, sym_weights) -> np.ndarray:
    """Project ``weights + dual`` toward the feasible set: weighted
    Lyapunov symmetrization followed by an entrywise clamp at zero."""
    z = lyapunov_symmetrize(state.weights + state.dual, sym_weights)
    np.maximum(z, 0.0, out=z)
    return z


def admm_dual_step(state: AdmmState, consensus_prev: np.ndarray, rho: float) -> AdmmState:
    """Scaled dual ascent; updates the residual pair in place."""
    gap = state.weights - state.consensus
    state.dual += gap
    state.primal_residual = float(np.linalg.norm(gap))
    state.dual_residual = float(rho * np.linalg.norm(state.consensus - consensus_prev))
    return state


@dataclass
class _Quadratic:
    """Item-space pieces of the transformed objective
    ``lam^2 tr(H'PH) + tr(H'B) + (theta/2) tr(H'DH) + const``."""

    gram_phi: np.ndarray
    linear: np.ndarray
    reg_weights: np.ndarray  # theta * item degree, per row
    lam: float
    constant: float

    def objective(self, h: np.ndarray) -> float:
        quad = self.lam**2 * float(np.sum(h * (self.gram_phi @ h)))
        lin = float(np.sum(h * self.linear))
        reg = 0.5 * float(np.sum(self.reg_weights[:, None] * h * h))
        return quad + lin + reg + self.constant


def _build_quadratic(
    interactions: InteractionMatrix, graph, phi: np.ndarray, hp: CoRMLHyperparams
) -> _Quadratic:
    d = interactions.item_degrees.astype(np.float64)
    inv_t = degree_power(d, -hp.t)
    gram_phi_raw = gram(interactions, phi)
    gram_ones = gram(interactions, np.ones(interactions.n_users))
    p = mirror_upper(inv_t[:, None] * gram_phi_raw * inv_t[None, :])
    xtx = inv_t[:, None] * gram_ones * inv_t[None, :]
    linear = -hp.lam * xtx
    constant = 0.0
    if hp.lam < 1.0:
        k = scale_rows_cols(graph, degree_power(d, -0.5), degree_power(d, 0.5 - hp.t))
        if sp.issparse(k):
            gw_k = np.asarray((k.T.tocsr() @ gram_phi_raw).T)
            s0_quad = float(k.multiply(gw_k).sum())
            s0_lin = float(k.multiply(gram_ones * inv_t[None, :]).sum())
            cross = gw_k
        else:
            cross = gram_phi_raw @ k
            s0_quad = float(np.sum(k * cross))
            s0_lin = float(np.sum(k * (gram_ones * inv_t[None, :])))
        linear = linear + 2.0 * hp.lam * (1.0 - hp.lam) * (inv_t[:, None] * cross)
        constant = (1.0 - hp.lam) ** 2 * s0_quad - (1.0 - hp.lam) * s0_lin
    return _Quadratic(p, linear, hp.theta * d, hp.lam, constant)


@dataclass
class CoRMLModel:
    """Fitted hybrid model: hollow symmetric nonnegative item weights plus
    the graph filter factor and the degree vectors needed for scoring."""

    item_weights: sp.csr_matrix
    filter: GraphFilterFactor
    user_degrees: np.ndarray
    item_degrees: np.ndarray
    hyperparams: CoRMLHyperparams
    g_mode: str = "dense"
    g_nnz_budget: int | None = None
    g_dense_threshold: int = 20000
    converged: bool = True
    trace: list = field(default_factory=list, repr=False)
    _graph_cache: object = field(default=None, repr=False, compare=False)

    kind = "corml"

    @property
    def n_items(self) -> int:
        return self.item_weights.shape[0]

    def graph_weights(self):
        if self._graph_cache is None:
            self._graph_cache = build_G(
                self.filter,
                dense_threshold=0 if self.g_mode == "sparse" else self.g_dense_threshold,
                nnz_budget=self.g_nnz_budget,
            )
        return self._graph_cache

    def score_users(self, interactions: InteractionMatrix, users=None) -> np.ndarray:
        graph = self.graph_weights() if self.hyperparams.lam < 1.0 else None
        return hybrid_scores(
            interactions,
            self.item_weights,
            graph,
            self.hyperparams.lam,
            self.hyperparams.t,
            item_degrees=self.item_degrees,
            users=users,
        )


def fit_corml(
    interactions: InteractionMatrix,
    hp: CoRMLHyperparams,
    nnz_budget: int | None = None,
    z_step_weights: str = "degree",
    g_dense_threshold: int = 20000,
) -> CoRMLModel:
    """Fit the hybrid item-weight model with ADMM.

    Builds the graph filter factor, assembles the fixed item-space
    Hessian and linear term, then iterates the three ADMM steps until both
    residuals fall under ``hp.tol`` or ``hp.max_iters`` is reached. The
    returned weights are hollow, symmetric and nonnegative; if the solver
    does not converge, the best-objective feasible iterate is returned and
    a :class:`ConvergenceWarning` is emitted (``model.converged`` is
    False). ``nnz_budget`` caps the stored nonzeros of the final weights
    via symmetric sparsification; ``z_step_weights`` selects degree or
    uniform symmetrization weights.

    Parameters
    ----------
    interactions : training interactions (every retained user nonempty)
    hp : hyperparameters; ``hp.rank`` is clamped to ``min(|U|, |I|)``
    nnz_budget : stored-nnz cap for the final weights, None for no cap
    z_step_weights : "degree" or "uniform"
    g_dense_threshold : item count up to which graph weights stay dense
    """
    hp.validate()
    if interactions.matrix.nnz == 0:
        raise ValueError("training matrix has no interactions")
    if z_step_weights not in ("degree", "uniform"):
        raise ValueError("z_step_weights must be 'degree' or 'uniform'")
    n_items = interactions.n_items
    rank = min(hp.rank, interactions.n_users, n_items)
    factor = truncated_svd(interactions, rank, seed=hp.seed)
    graph = build_G(factor, dense_threshold=g_dense_threshold, nnz_budget=nnz_budget)
    g_mode = "dense" if isinstance(graph, np.ndarray) else "sparse"
    phi = compute_phi(interactions.user_degrees, hp.epsilon, hp.t_u)
    quad = _build_quadratic(interactions, graph, phi, hp)

    hessian = (2.0 * hp.lam**2) * quad.gram_phi
    idx = np.diag_indices(n_items)
    hessian[idx] += quad.reg_weights + hp.rho
    cache = build_h_step_cache(hessian, hp.rho)

    sym_weights = (
        interactions.item_degrees.astype(np.float64)
        if z_step_weights == "degree"
        else np.ones(n_items)
    )
    state = AdmmState.zeros(n_items)
    trace: list[dict] = []
    best_obj, best_consensus = np.inf, state.consensus.copy()
    converged = False
    for iteration in range(1, hp.max_iters + 1):
        state.weights = admm_h_step(state, cache, quad.linear)
        consensus_prev = state.consensus
        state.consensus = admm_z_step(state, sym_weights)
        admm_dual_step(state, consensus_prev, hp.rho)
        state.iteration = iteration
        obj = quad.objective(state.consensus)
        trace.append(
            {
                "iteration": iteration,
                "primal_residual": state.primal_residual,
                "dual_residual": state.dual_residual,
                "objective": obj,
            }
        )
        if obj < best_obj:
            best_obj, best_consensus = obj, state.consensus.copy()
        if state.primal_residual <= hp.tol and state.dual_residual <= hp.tol:
            converged = True
            break
    final = state.consensus if converged else best_consensus
    if not converged:
        warnings.warn(
            f"ADMM did not converge in {hp.max_iters} iterations "
            f"(primal {state.primal_residual:.3e}, dual {state.dual_residual:.3e}); "
            "returning the best feasible iterate",
            ConvergenceWarning,
            stacklevel=2,
        )
    final = final.copy()
    np.fill_diagonal(final, 0.0)
    weights = to_canonical_csr(final)
    if nnz_budget is not None and weights.nnz > nnz_budget:
        weights = sparsify(weights, nnz_budget, symmetric=True)
    return CoRMLModel(
        item_weights=weights,
        filter=factor,
        user_degrees=interactions.user_degrees.copy(),
        item_degrees=interactions.item_degrees.copy(),
        hyperparams=hp,
        g_mode=g_mode,
        g_nnz_budget=nnz_budget,
        g_dense_threshold=g_dense_threshold,
        converged=converged,
        trace=trace,
    )
