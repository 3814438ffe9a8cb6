"""Independent reference implementations used only by the tests.

Everything here is written directly from definitions with dense algebra
and plain loops, deliberately avoiding the library's computation paths,
so agreement between the two is meaningful.
"""

from __future__ import annotations

import math

import numpy as np


def equality_constrained_qp(hessian: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Columnwise minimizer of 0.5 h'Ah - b'h subject to h[j] = 0 for
    column j, via the bordered KKT system solved densely."""
    n = hessian.shape[0]
    out = np.zeros((n, rhs.shape[1]))
    for j in range(rhs.shape[1]):
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = hessian
        kkt[:n, n] = np.eye(n)[:, j]
        kkt[n, :n] = np.eye(n)[j, :]
        vec = np.concatenate([rhs[:, j], [0.0]])
        sol = np.linalg.solve(kkt, vec)
        out[:, j] = sol[:n]
    return out


def ease_objective(r_dense: np.ndarray, c: np.ndarray, l2: float) -> float:
    return 0.5 * float(np.sum((r_dense - r_dense @ c) ** 2)) + 0.5 * l2 * float(
        np.sum(c * c)
    )


# ---------------------------------------------------------------------------
# dense training-objective pieces, written from the score definition
# ---------------------------------------------------------------------------


def degree_scale(degrees, exponent):
    d = np.asarray(degrees, dtype=np.float64)
    out = np.zeros_like(d)
    positive = d > 0
    out[positive] = d[positive] ** exponent
    if exponent == 0:
        out[~positive] = 1.0
    return out


def phi_vector(user_degrees, epsilon, t_u):
    d = np.asarray(user_degrees, dtype=np.float64)
    ratio = np.where(d > 0, d / d.max(), 1.0)
    return epsilon * ratio ** (-t_u)


def dense_hybrid_scores(r_dense, h, g, lam, t, item_degrees):
    d = np.asarray(item_degrees, dtype=np.float64)
    mix = lam * np.diag(degree_scale(d, -t)) @ h @ np.diag(degree_scale(d, t))
    mix = mix + (1 - lam) * np.diag(degree_scale(d, -0.5)) @ g @ np.diag(
        degree_scale(d, 0.5)
    )
    return r_dense @ mix


def transformed_objective(r_dense, h, g, lam, t, item_degrees, user_degrees, epsilon, t_u, theta):
    """Training objective after the right normalization: quadratic score
    term, observed-score term, and the degree-weighted ridge."""
    d = np.asarray(item_degrees, dtype=np.float64)
    phi = phi_vector(user_degrees, epsilon, t_u)
    x = r_dense @ np.diag(degree_scale(d, -t))
    s0 = (1 - lam) * r_dense @ np.diag(degree_scale(d, -0.5)) @ g @ np.diag(
        degree_scale(d, 0.5 - t)
    )
    y = lam * x @ h + s0
    quad = float(np.sum(phi[:, None] * y * y))
    lin = float(np.sum(y * x))
    reg = 0.5 * theta * float(np.sum(d[:, None] * h * h))
    return quad - lin + reg


def transformed_gradient(r_dense, h, g, lam, t, item_degrees, user_degrees, epsilon, t_u, theta):
    d = np.asarray(item_degrees, dtype=np.float64)
    phi = phi_vector(user_degrees, epsilon, t_u)
    x = r_dense @ np.diag(degree_scale(d, -t))
    s0 = (1 - lam) * r_dense @ np.diag(degree_scale(d, -0.5)) @ g @ np.diag(
        degree_scale(d, 0.5 - t)
    )
    y = lam * x @ h + s0
    return 2 * lam * x.T @ (phi[:, None] * y) - lam * x.T @ x + theta * d[:, None] * h


def feasible_projection(h: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto {symmetric, nonnegative, hollow}:
    the constraints decouple over index pairs, so symmetrize, clamp, and
    zero the diagonal."""
    z = 0.5 * (h + h.T)
    z = np.maximum(z, 0.0)
    np.fill_diagonal(z, 0.0)
    return z


def projected_gradient_fit(
    r_dense, g, lam, t, item_degrees, user_degrees, epsilon, t_u, theta, steps=10000
):
    """Projected gradient on the constrained training problem, run from
    zero with a 1/L step; the projection is exact, so this converges to
    the constrained optimum of the convex objective."""
    d = np.asarray(item_degrees, dtype=np.float64)
    phi = phi_vector(user_degrees, epsilon, t_u)
    x = r_dense @ np.diag(degree_scale(d, -t))
    hess = 2 * lam * lam * x.T @ (phi[:, None] * x) + theta * np.diag(d)
    lipschitz = float(np.max(np.linalg.eigvalsh(0.5 * (hess + hess.T))))
    step = 1.0 / lipschitz
    h = np.zeros((d.size, d.size))
    for _ in range(steps):
        grad = transformed_gradient(
            r_dense, h, g, lam, t, item_degrees, user_degrees, epsilon, t_u, theta
        )
        h = feasible_projection(h - step * grad)
    return h


# ---------------------------------------------------------------------------
# metric geometry, dense
# ---------------------------------------------------------------------------


def dense_weight(hollow_dense: np.ndarray, omega: float, diag_base) -> np.ndarray:
    return hollow_dense + omega * np.diag(np.asarray(diag_base, dtype=np.float64))


def dense_features(r_dense: np.ndarray, t: float):
    """(user feature columns, item feature columns) of the signal space."""
    d = r_dense.sum(axis=0)
    p = np.diag(degree_scale(d, -t)) @ r_dense.T
    q = np.diag(degree_scale(d, t))
    return p, q


def quad_distance_sq(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(diff @ w @ diff)


# ---------------------------------------------------------------------------
# ranking metrics, plain loops
# ---------------------------------------------------------------------------


def brute_ndcg(ranked_items, relevant, k):
    relevant = set(int(i) for i in relevant)
    dcg = 0.0
    for pos, item in enumerate(list(ranked_items)[:k], start=1):
        if int(item) in relevant:
            dcg += 1.0 / math.log2(pos + 1)
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(len(relevant), k) + 1))
    return dcg / ideal


def brute_mrr(ranked_items, relevant, k):
    relevant = set(int(i) for i in relevant)
    for pos, item in enumerate(list(ranked_items)[:k], start=1):
        if int(item) in relevant:
            return 1.0 / pos
    return 0.0


def brute_novelty(lists_of_items, item_degrees, n_users, k):
    total = 0.0
    for items in lists_of_items:
        for item in list(items)[:k]:
            deg = int(item_degrees[int(item)])
            if deg == 0:
                deg = 1
            total += -math.log2(deg / n_users) / math.log2(n_users)
    return total / (len(lists_of_items) * k)


def brute_topk(scores, exclude, k):
    exclude = set(int(i) for i in exclude)
    order = sorted(
        (i for i in range(len(scores)) if i not in exclude),
        key=lambda i: (-scores[i], i),
    )
    return order[:k]
