"""Interaction-log parsing, deterministic splitting, and artifact
persistence (split directories and binary model files)."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    ChecksumError,
    DataFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .signal_models import EaseModel, GfcfModel, GraphFilterFactor
from .solver import CoRMLHyperparams, CoRMLModel
from .sparse_core import InteractionMatrix, to_canonical_csr

__all__ = [
    "ParseResult",
    "IdIndex",
    "SplitDataset",
    "parse_interactions",
    "split",
    "write_split_dir",
    "read_split_dir",
    "save_model",
    "load_model",
    "file_hash",
]


@dataclass(frozen=True)
class ParseResult:
    """Deduplicated token pairs plus (line number, content) of every
    malformed line that was skipped."""

    pairs: list[tuple[str, str]]
    malformed: list[tuple[int, str]]


def parse_interactions(stream) -> ParseResult:
    """Parse one ``user<TAB>item`` pair per line (any whitespace works as
    the separator). ``#``-prefixed and blank lines are skipped, duplicate
    pairs keep their first occurrence, and lines without exactly two
    fields are collected as malformed. Raises when nothing parses.
    """
    if isinstance(stream, (str, bytes)):
        if isinstance(stream, bytes):
            stream = stream.decode("utf-8")
        lines = stream.splitlines()
    else:
        lines = stream
    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    malformed: list[tuple[int, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            malformed.append((lineno, line))
            continue
        pair = (fields[0], fields[1])
        if pair in seen:
            continue
        seen.add(pair)
        pairs.append(pair)
    if not pairs:
        raise DataFormatError("no interactions found in the input")
    return ParseResult(pairs, malformed)


@dataclass(frozen=True)
class IdIndex:
    """Bijective token/index maps for users and items, contiguous from 0,
    in first-occurrence order of the source pairs."""

    users: list[str]
    items: list[str]
    user_to_index: dict[str, int]
    item_to_index: dict[str, int]

    @classmethod
    def from_pairs(cls, pairs) -> "IdIndex":
        users: list[str] = []
        items: list[str] = []
        user_to_index: dict[str, int] = {}
        item_to_index: dict[str, int] = {}
        for user, item in pairs:
            if user not in user_to_index:
                user_to_index[user] = len(users)
                users.append(user)
            if item not in item_to_index:
                item_to_index[item] = len(items)
                items.append(item)
        return cls(users, items, user_to_index, item_to_index)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class SplitDataset:
    """Train/valid/test interaction matrices over one shared index; the
    three parts partition the filtered input."""

    train: InteractionMatrix
    valid: InteractionMatrix
    test: InteractionMatrix
    index: IdIndex


def _split_counts(n: int, ratio: tuple[float, float, float]) -> tuple[int, int, int]:
    """Deterministic per-user counts: train = max(1, floor(r_train*n)),
    test = floor(r_test*n), valid = remainder."""
    n_train = max(1, int(np.floor(ratio[0] * n)))
    n_test = int(np.floor(ratio[2] * n))
    n_valid = n - n_train - n_test
    return n_train, n_valid, n_test


def split(
    pairs,
    ratio: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    min_user_degree: int = 5,
    strategy: str = "per-user",
) -> SplitDataset:
    """Split token pairs into train/valid/test interaction matrices.

    Users with fewer than ``min_user_degree`` interactions are dropped
    entirely; the index covers only the retained pairs, and items that end
    up with zero train interactions keep their slot (degree 0). The
    default per-user strategy shuffles each user's interactions with the
    seeded generator and assigns them by cumulative ratio, guaranteeing at
    least one train interaction per retained user. The "global" strategy
    permutes all pairs at once and may leave users without train
    interactions (cold start); it exists as an escape hatch.
    """
    ratio = tuple(float(r) for r in ratio)
    if len(ratio) != 3 or any(r <= 0 for r in ratio) or abs(sum(ratio) - 1.0) > 1e-9:
        raise ValueError("ratio must be three positive numbers summing to 1")
    if strategy not in ("per-user", "global"):
        raise ValueError("strategy must be 'per-user' or 'global'")

    deduped: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for pair in pairs:
        key = (pair[0], pair[1])
        if key not in seen:
            seen.add(key)
            deduped.append(key)
    counts: dict[str, int] = {}
    for user, _ in deduped:
        counts[user] = counts.get(user, 0) + 1
    retained = [p for p in deduped if counts[p[0]] >= min_user_degree]
    if not retained:
        raise DataFormatError(
            f"no users left after the min_user_degree={min_user_degree} filter"
        )
    index = IdIndex.from_pairs(retained)

    by_user: list[list[int]] = [[] for _ in range(index.n_users)]
    for user, item in retained:
        by_user[index.user_to_index[user]].append(index.item_to_index[item])

    rng = np.random.default_rng(seed)
    parts: tuple[list, list, list] = ([], [], [])
    if strategy == "per-user":
        for u, items in enumerate(by_user):
            items = np.asarray(items, dtype=np.int64)
            perm = rng.permutation(items.size)
            shuffled = items[perm]
            n_train, n_valid, _ = _split_counts(items.size, ratio)
            bounds = (0, n_train, n_train + n_valid, items.size)
            for part, (lo, hi) in zip(parts, zip(bounds, bounds[1:])):
                part.extend((u, int(i)) for i in shuffled[lo:hi])
    else:
        all_pairs = [
            (index.user_to_index[user], index.item_to_index[item])
            for user, item in retained
        ]
        perm = rng.permutation(len(all_pairs))
        n_train, n_valid, _ = _split_counts(len(all_pairs), ratio)
        bounds = (0, n_train, n_train + n_valid, len(all_pairs))
        for part, (lo, hi) in zip(parts, zip(bounds, bounds[1:])):
            part.extend(all_pairs[p] for p in perm[lo:hi])

    shape = (index.n_users, index.n_items)
    train, valid, test = (InteractionMatrix.from_pairs(p, *shape) for p in parts)
    if strategy == "per-user" and np.any(train.user_degrees == 0):
        raise AssertionError("per-user split left a user without train interactions")
    return SplitDataset(train, valid, test, index)


_SPLIT_FILES = ("train.tsv", "valid.tsv", "test.tsv", "users.tsv", "items.tsv")


def _echo_lines(config_echo: dict | None) -> list[str]:
    if not config_echo:
        return []
    return [f"# config {key}={config_echo[key]}" for key in sorted(config_echo)]


def write_split_dir(dataset: SplitDataset, outdir, config_echo: dict | None = None) -> None:
    """Write the five-file split layout: index-space pair files for the
    three parts plus ``users.tsv``/``items.tsv`` token maps."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["# corml-split v1"] + _echo_lines(config_echo)
    for name, part in zip(
        _SPLIT_FILES[:3], (dataset.train, dataset.valid, dataset.test)
    ):
        m = part.matrix
        lines = list(header)
        for u in range(m.shape[0]):
            for i in part.row_items(u):
                lines.append(f"{u}\t{i}")
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for name, tokens in (("users.tsv", dataset.index.users), ("items.tsv", dataset.index.items)):
        lines = list(header)
        lines.extend(f"{token}\t{idx}" for idx, token in enumerate(tokens))
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_pair_file(path: Path) -> list[tuple[str, str]]:
    result: list[tuple[str, str]] = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataFormatError(f"{path.name}: malformed line {raw!r}")
        result.append((fields[0], fields[1]))
    return result


def read_split_dir(path) -> SplitDataset:
    """Load a split directory written by :func:`write_split_dir`."""
    root = Path(path)
    for name in _SPLIT_FILES:
        if not (root / name).exists():
            raise DataFormatError(f"split directory is missing {name}")
    users: list[str] = []
    items: list[str] = []
    for name, store in (("users.tsv", users), ("items.tsv", items)):
        for token, idx in _read_pair_file(root / name):
            if int(idx) != len(store):
                raise DataFormatError(f"{name}: indices must be contiguous from 0")
            store.append(token)
    index = IdIndex(
        users,
        items,
        {token: i for i, token in enumerate(users)},
        {token: i for i, token in enumerate(items)},
    )
    shape = (index.n_users, index.n_items)
    matrices = []
    for name in _SPLIT_FILES[:3]:
        pairs = [(int(u), int(i)) for u, i in _read_pair_file(root / name)]
        matrices.append(InteractionMatrix.from_pairs(pairs, *shape))
    return SplitDataset(matrices[0], matrices[1], matrices[2], index)


# ---------------------------------------------------------------------------
# Binary model files
# ---------------------------------------------------------------------------
#
# Layout (little endian):
#   magic  b"CORML\x01"                         6 bytes
#   version u8, kind u8, g_mode u8, reserved u8 4 bytes
#   n_users u64, n_items u64, rank u64, h_nnz u64, g_nnz_budget u64
#   t, t_u, epsilon, theta, lam, rho, tol       7 x f64
#   max_iters u64, seed i64
#   H as (row u32, col u32, value f64) triples, row-major sorted
#   V dense f64 row-major (n_items x rank)
#   item_degrees i64[n_items], user_degrees i64[n_users]
#   checksum u64 = blake2b-8 of all preceding bytes

MAGIC = b"CORML\x01"
MODEL_VERSION = 1
_KIND_CODES = {"ease": 1, "gfcf": 2, "corml": 3}
_KIND_NAMES = {code: name for name, code in _KIND_CODES.items()}
_G_MODES = {"dense": 0, "sparse": 1}
_G_MODE_NAMES = {code: name for name, code in _G_MODES.items()}
_FIXED_HEADER = struct.Struct("<BBBBQQQQQdddddddQq")
_COO_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("val", "<f8")])


def file_hash(path) -> str:
    """64-bit content hash of a file, hex encoded."""
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=8).hexdigest()


def _coo_block(matrix: sp.csr_matrix) -> np.ndarray:
    coo = to_canonical_csr(matrix).tocoo()
    block = np.empty(coo.nnz, dtype=_COO_DTYPE)
    block["row"] = coo.row
    block["col"] = coo.col
    block["val"] = coo.data
    return block


def _model_parts(model):
    """(kind, hp, weights csr, vectors, item_degrees, user_degrees, g_mode, g_nnz)."""
    kind = getattr(model, "kind", None)
    if kind == "ease":
        weights = to_canonical_csr(model.weights)
        n = weights.shape[0]
        hp = CoRMLHyperparams(t=0.0, t_u=0.0, theta=model.l2, lam=1.0, rank=1, seed=0)
        return (
            kind,
            hp,
            weights,
            np.zeros((n, 0)),
            np.zeros(n, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            "dense",
            0,
        )
    if kind == "gfcf":
        factor = model.factor
        n = factor.singular_vectors.shape[0]
        hp = CoRMLHyperparams(rank=factor.rank or 1, seed=model.seed)
        return (
            kind,
            hp,
            sp.csr_matrix((n, n)),
            factor.singular_vectors,
            np.asarray(factor.item_degrees, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            "dense",
            0,
        )
    if kind == "corml":
        return (
            kind,
            model.hyperparams,
            model.item_weights,
            model.filter.singular_vectors,
            np.asarray(model.item_degrees, dtype=np.int64),
            np.asarray(model.user_degrees, dtype=np.int64),
            model.g_mode,
            model.g_nnz_budget or 0,
        )
    raise ValueError(f"cannot serialize model of kind {kind!r}")


def save_model(model, path) -> None:
    """Serialize an ease/gfcf/corml model; arrays round-trip bit exactly."""
    kind, hp, weights, vectors, item_degrees, user_degrees, g_mode, g_nnz = _model_parts(
        model
    )
    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    n_items = weights.shape[0]
    n_users = int(user_degrees.size)
    rank = vectors.shape[1]
    coo = _coo_block(weights)
    head = MAGIC + _FIXED_HEADER.pack(
        MODEL_VERSION,
        _KIND_CODES[kind],
        _G_MODES[g_mode],
        0,
        n_users,
        n_items,
        rank,
        coo.size,
        int(g_nnz),
        hp.t,
        hp.t_u,
        hp.epsilon,
        hp.theta,
        hp.lam,
        hp.rho,
        hp.tol,
        hp.max_iters,
        hp.seed,
    )
    payload = b"".join(
        (
            head,
            coo.tobytes(),
            vectors.tobytes(),
            item_degrees.astype("<i8").tobytes(),
            user_degrees.astype("<i8").tobytes(),
        )
    )
    checksum = hashlib.blake2b(payload, digest_size=8).digest()
    Path(path).write_bytes(payload + checksum)


def load_model(path):
    """Load a model file; returns an EaseModel, GfcfModel or CoRMLModel.

    Raises :class:`VersionMismatchError` on a bad magic/version,
    :class:`TruncatedFileError` when the file is shorter than the header
    declares, and :class:`ChecksumError` when the trailing checksum does
    not match. No partial model is ever returned.
    """
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + _FIXED_HEADER.size + 8:
        if not data.startswith(MAGIC):
            raise VersionMismatchError("not a corml model file (bad magic)")
        raise TruncatedFileError("model file is shorter than its fixed header")
    if not data.startswith(MAGIC):
        raise VersionMismatchError("not a corml model file (bad magic)")
    fields = _FIXED_HEADER.unpack_from(data, len(MAGIC))
    (
        version,
        kind_code,
        g_mode_code,
        _reserved,
        n_users,
        n_items,
        rank,
        h_nnz,
        g_nnz,
        t,
        t_u,
        epsilon,
        theta,
        lam,
        rho,
        tol,
        max_iters,
        seed,
    ) = fields
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"unsupported model file version {version}")
    if kind_code not in _KIND_NAMES:
        raise DataFormatError(f"unknown model kind code {kind_code}")
    offset = len(MAGIC) + _FIXED_HEADER.size
    sizes = (h_nnz * _COO_DTYPE.itemsize, n_items * rank * 8, n_items * 8, n_users * 8)
    expected = offset + sum(sizes) + 8
    if len(data) < expected:
        raise TruncatedFileError(
            f"model file truncated: {len(data)} bytes, expected {expected}"
        )
    if len(data) > expected:
        raise DataFormatError(
            f"model file has {len(data) - expected} trailing bytes beyond its layout"
        )
    body, checksum = data[:-8], data[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != checksum:
        raise ChecksumError("model file checksum mismatch")

    cursor = offset
    coo = np.frombuffer(data, dtype=_COO_DTYPE, count=h_nnz, offset=cursor)
    cursor += sizes[0]
    vectors = (
        np.frombuffer(data, dtype="<f8", count=n_items * rank, offset=cursor)
        .reshape(n_items, rank)
        .copy()
    )
    cursor += sizes[1]
    item_degrees = np.frombuffer(data, dtype="<i8", count=n_items, offset=cursor).copy()
    cursor += sizes[2]
    user_degrees = np.frombuffer(data, dtype="<i8", count=n_users, offset=cursor).copy()

    weights = sp.csr_matrix(
        (coo["val"].copy(), (coo["row"].astype(np.int64), coo["col"].astype(np.int64))),
        shape=(n_items, n_items),
    )
    weights.sort_indices()
    kind = _KIND_NAMES[kind_code]
    hp = CoRMLHyperparams(
        t=t,
        t_u=t_u,
        epsilon=epsilon,
        theta=theta,
        lam=lam,
        rank=int(rank) if rank else 1,
        rho=rho,
        max_iters=int(max_iters),
        tol=tol,
        seed=int(seed),
    )
    if kind == "ease":
        return EaseModel(weights, l2=theta)
    factor = GraphFilterFactor(
        singular_vectors=vectors,
        singular_values=None,
        item_degrees=item_degrees,
        requested_rank=int(rank),
    )
    if kind == "gfcf":
        return GfcfModel(factor, seed=int(seed))
    return CoRMLModel(
        item_weights=weights,
        filter=factor,
        user_degrees=user_degrees,
        item_degrees=item_degrees,
        hyperparams=hp,
        g_mode=_G_MODE_NAMES[g_mode_code],
        g_nnz_budget=int(g_nnz) or None,
    )
