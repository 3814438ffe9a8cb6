"""Top-K ranking generation and metric computation.

All ranking ties break by ascending item index and every aggregate is a
fixed-order mean over per-user values, so reports are reproducible byte
for byte.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .sparse_core import InteractionMatrix

__all__ = [
    "RankedList",
    "EvalReport",
    "rank_topk",
    "ndcg_at_k",
    "mrr_at_k",
    "novelty_at_k",
    "evaluate",
    "dataset_hash",
]

METRIC_NAMES = ("ndcg", "mrr", "nov")

_CHUNK = 1024


@dataclass(frozen=True)
class RankedList:
    """Top-K recommendation for one user: items in nonincreasing score
    order, ties broken by ascending item index, excluded items absent.
    ``truncated`` marks lists shorter than the requested K."""

    user: int
    items: np.ndarray
    scores: np.ndarray
    truncated: bool = False


def rank_topk(scores_u, exclude, k: int, user: int = -1) -> RankedList:
    """Top-``k`` non-excluded items by score, deterministic under ties."""
    if k < 1:
        raise ValueError("k must be at least 1")
    y = np.asarray(scores_u, dtype=np.float64)
    mask = np.ones(y.size, dtype=bool)
    excl = np.asarray(sorted(exclude), dtype=np.int64)
    if excl.size:
        mask[excl] = False
    candidates = np.flatnonzero(mask)
    order = np.lexsort((candidates, -y[candidates]))
    top = candidates[order[:k]]
    return RankedList(
        user=user,
        items=top,
        scores=y[top],
        truncated=top.size < k,
    )


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


def ndcg_at_k(ranked: RankedList, relevant, k: int) -> float:
    """Discounted cumulative gain over the top ``k``, normalized by the
    ideal ordering of ``min(|relevant|, k)`` hits."""
    rel = np.asarray(sorted(relevant), dtype=np.int64)
    if rel.size == 0:
        raise ValueError("relevant set must be nonempty")
    items = ranked.items[:k]
    disc = _discounts(k)
    hits = np.isin(items, rel, assume_unique=True)
    dcg = float(disc[: items.size][hits].sum())
    ideal = float(disc[: min(rel.size, k)].sum())
    return dcg / ideal


def mrr_at_k(ranked: RankedList, relevant, k: int) -> float:
    """Reciprocal rank of the first relevant item within the top ``k``,
    zero when none appears."""
    rel = np.asarray(sorted(relevant), dtype=np.int64)
    if rel.size == 0:
        raise ValueError("relevant set must be nonempty")
    items = ranked.items[:k]
    hits = np.flatnonzero(np.isin(items, rel, assume_unique=True))
    if hits.size == 0:
        return 0.0
    return 1.0 / float(hits[0] + 1)


def _novelty_table(train_item_degrees, n_users: int) -> tuple[np.ndarray, int]:
    """Per-item novelty ``-log2(d_i / |U|) / log2 |U|`` with zero degrees
    treated as one; returns the table and the zero-degree count."""
    d = np.asarray(train_item_degrees, dtype=np.float64)
    n_zero = int(np.count_nonzero(d == 0))
    d = np.where(d == 0.0, 1.0, d)
    return -np.log2(d / n_users) / np.log2(n_users), n_zero


def novelty_at_k(ranked_lists, train_item_degrees, n_users: int, k: int) -> float:
    """Mean normalized negative log-popularity of the recommended items,
    averaged over users and the ``k`` list positions."""
    if n_users < 2:
        raise ValueError("novelty needs at least two users for the log scale")
    table, n_zero = _novelty_table(train_item_degrees, n_users)
    if n_zero:
        warnings.warn(
            f"{n_zero} items have zero training degree; treated as degree 1",
            RuntimeWarning,
            stacklevel=2,
        )
    lists = list(ranked_lists)
    if not lists:
        raise ValueError("no ranked lists given")
    total = 0.0
    for ranked in lists:
        total += float(table[ranked.items[:k]].sum()) / k
    return total / len(lists)


def dataset_hash(*parts: InteractionMatrix) -> str:
    """Order-sensitive content hash of one or more interaction matrices."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        m = part.matrix
        h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
        h.update(m.indptr.astype(np.int64).tobytes())
        h.update(m.indices.astype(np.int64).tobytes())
    return h.hexdigest()


@dataclass
class EvalReport:
    """Aggregated ranking metrics with optional per-user breakdowns."""

    cutoffs: list[int]
    mode: str
    means: dict[str, dict[int, float]]
    n_users_evaluated: int
    n_users_skipped: int
    n_zero_degree_items: int
    data_hash: str
    model_hash: str | None = None
    per_user: dict[str, dict[int, np.ndarray]] | None = None
    user_ids: np.ndarray | None = None
    config_echo: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "cutoffs": [int(k) for k in self.cutoffs],
            "mode": self.mode,
            "means": {
                name: {str(k): self.means[name][k] for k in self.cutoffs}
                for name in METRIC_NAMES
            },
            "n_users_evaluated": self.n_users_evaluated,
            "n_users_skipped": self.n_users_skipped,
            "n_zero_degree_items": self.n_zero_degree_items,
            "dataset_hash": self.data_hash,
            "model_hash": self.model_hash,
            "config": dict(sorted(self.config_echo.items())),
        }
        if self.per_user is not None:
            doc["user_ids"] = self.user_ids.tolist()
            doc["per_user"] = {
                name: {str(k): self.per_user[name][k].tolist() for k in self.cutoffs}
                for name in METRIC_NAMES
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_tsv(self) -> str:
        lines = ["# corml-eval v1"]
        lines.append(f"mode\t{self.mode}")
        lines.append(f"users_evaluated\t{self.n_users_evaluated}")
        lines.append(f"users_skipped\t{self.n_users_skipped}")
        lines.append(f"zero_degree_items\t{self.n_zero_degree_items}")
        lines.append(f"dataset_hash\t{self.data_hash}")
        lines.append(f"model_hash\t{self.model_hash if self.model_hash else '-'}")
        for name in METRIC_NAMES:
            for k in self.cutoffs:
                lines.append(f"{name}@{k}\t{self.means[name][k]!r}")
        for key in sorted(self.config_echo):
            lines.append(f"config.{key}\t{self.config_echo[key]}")
        return "\n".join(lines) + "\n"


def evaluate(
    model,
    split,
    k_list=(5, 10, 20),
    mode: str = "test",
    exclude_valid: bool = True,
    per_user: bool = False,
    model_hash: str | None = None,
    config_echo: dict | None = None,
) -> EvalReport:
    """Score every user against the held-out split and aggregate metrics.

    ``model`` is anything with ``score_users(train, users) -> scores``.
    Mode "valid" ranks against the validation interactions excluding train
    items; mode "test" ranks against the test interactions excluding train
    and (by default) validation items. Users with an empty relevance set
    are skipped and counted. Mean values are exact fixed-order averages of
    the per-user values.
    """
    if mode not in ("valid", "test"):
        raise ValueError("mode must be 'valid' or 'test'")
    cutoffs = sorted(int(k) for k in k_list)
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive")
    train = split.train
    target = split.valid if mode == "valid" else split.test
    if target.matrix.shape != train.matrix.shape:
        raise ValueError("split parts disagree on matrix shape")
    if getattr(model, "n_items", train.n_items) != train.n_items:
        raise ValueError("model and split disagree on the item count")
    k_max = cutoffs[-1]
    nov_table, n_zero = _novelty_table(train.item_degrees, train.n_users)

    values: dict[str, dict[int, list[float]]] = {
        name: {k: [] for k in cutoffs} for name in METRIC_NAMES
    }
    evaluated_users: list[int] = []
    n_skipped = 0
    n_users = train.n_users
    for start in range(0, n_users, _CHUNK):
        chunk = np.arange(start, min(start + _CHUNK, n_users))
        scores = None
        for offset, u in enumerate(chunk):
            relevant = target.row_items(u)
            if relevant.size == 0:
                n_skipped += 1
                continue
            if scores is None:
                scores = model.score_users(train, chunk)
            exclude = train.row_items(u)
            if mode == "test" and exclude_valid:
                exclude = np.union1d(exclude, split.valid.row_items(u))
            ranked = rank_topk(scores[offset], exclude, k_max, user=int(u))
            evaluated_users.append(int(u))
            for k in cutoffs:
                values["ndcg"][k].append(ndcg_at_k(ranked, relevant, k))
                values["mrr"][k].append(mrr_at_k(ranked, relevant, k))
                values["nov"][k].append(float(nov_table[ranked.items[:k]].sum()) / k)
    if not evaluated_users:
        raise ValueError("no users with a nonempty relevance set")

    arrays = {
        name: {k: np.asarray(vals) for k, vals in per_k.items()}
        for name, per_k in values.items()
    }
    means = {
        name: {k: float(np.mean(arr)) for k, arr in per_k.items()}
        for name, per_k in arrays.items()
    }
    return EvalReport(
        cutoffs=cutoffs,
        mode=mode,
        means=means,
        n_users_evaluated=len(evaluated_users),
        n_users_skipped=n_skipped,
        n_zero_degree_items=n_zero,
        data_hash=dataset_hash(split.train, split.valid, split.test),
        model_hash=model_hash,
        per_user=arrays if per_user else None,
        user_ids=np.asarray(evaluated_users) if per_user else None,
        config_echo=dict(config_echo or {}),
    )
