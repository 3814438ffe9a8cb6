"""Command line interface: split, train, eval, recommend, analyze.

Configuration precedence is defaults < config file < environment < flags.
The config file is flat ``key = value`` text with ``#`` comments; keys are
the long flag names with dashes replaced by underscores. Environment
variables use the ``CORML_`` prefix (``CORML_THETA=0.2``). Every command
is deterministic given its inputs and seed, and echoes its resolved
configuration into the artifacts it writes.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import CormlError, DataFormatError, FactorizationError, UsageError

ENV_PREFIX = "CORML_"

DEFAULTS: dict[str, object] = {
    "model": "corml",
    "t": 0.05,
    "tu": 0.5,
    "eps": 0.1,
    "theta": 0.1,
    "lam": 0.7,
    "rank": 64,
    "rho": 5.0,
    "iters": 50,
    "tol": 1e-4,
    "seed": 0,
    "k": "5,10,20",
    "mode": "test",
    "nnz_budget": None,
    "threads": None,
    "ratio": "0.6,0.2,0.2",
    "min_user_degree": 5,
    "strategy": "per-user",
    "samples": 500,
    "keep_valid": False,
    "per_user": False,
    "topk": 10,
    "max_dense_items": 50000,
    "power_iters": 4,
    "z_weights": "degree",
}

_COERCE = {
    "model": str,
    "mode": str,
    "strategy": str,
    "z_weights": str,
    "k": str,
    "ratio": str,
    "t": float,
    "tu": float,
    "eps": float,
    "theta": float,
    "lam": float,
    "rho": float,
    "tol": float,
    "rank": int,
    "iters": int,
    "seed": int,
    "samples": int,
    "min_user_degree": int,
    "topk": int,
    "max_dense_items": int,
    "power_iters": int,
    "nnz_budget": lambda v: None if v in ("", "none", "None") else int(v),
    "threads": lambda v: None if v in ("", "none", "None") else int(v),
    "keep_valid": lambda v: str(v).lower() in ("1", "true", "yes"),
    "per_user": lambda v: str(v).lower() in ("1", "true", "yes"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--threads", type=int, help="BLAS worker thread cap")
    parser.add_argument("--seed", type=int, help="random seed")


def _add_hyper(parser):
    parser.add_argument("--model", choices=("ease", "gfcf", "corml"))
    parser.add_argument("--t", type=float, help="item normalization strength")
    parser.add_argument("--tu", type=float, help="user-degree scaling exponent")
    parser.add_argument("--eps", type=float, help="global score scaling")
    parser.add_argument("--theta", type=float, help="ridge strength")
    parser.add_argument("--lambda", dest="lam", type=float, help="branch mix weight")
    parser.add_argument("--rank", type=int, help="SVD rank")
    parser.add_argument("--rho", type=float, help="ADMM penalty")
    parser.add_argument("--iters", type=int, help="ADMM iteration cap")
    parser.add_argument("--tol", type=float, help="ADMM residual tolerance")
    parser.add_argument("--power-iters", dest="power_iters", type=int)
    parser.add_argument("--nnz-budget", dest="nnz_budget", type=int)
    parser.add_argument(
        "--z-weights", dest="z_weights", choices=("degree", "uniform"),
        help="ADMM symmetrization weighting",
    )
    parser.add_argument("--max-dense-items", dest="max_dense_items", type=int)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="corml",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="split an interaction log")
    p_split.add_argument("input", help="interaction file (user TAB item per line)")
    p_split.add_argument("outdir", help="output split directory")
    p_split.add_argument("--ratio", help="train,valid,test ratios")
    p_split.add_argument("--min-user-degree", dest="min_user_degree", type=int)
    p_split.add_argument("--strategy", choices=("per-user", "global"))
    _add_common(p_split)

    p_train = sub.add_parser("train", help="fit a model on a split directory")
    p_train.add_argument("splitdir")
    p_train.add_argument("out", help="model file path")
    _add_hyper(p_train)
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate model files on a split")
    p_eval.add_argument("splitdir")
    p_eval.add_argument("models", nargs="+", help="model file(s)")
    p_eval.add_argument("--out", required=True, help="report path prefix")
    p_eval.add_argument("--k", help="comma-separated cutoffs")
    p_eval.add_argument("--mode", choices=("valid", "test"))
    p_eval.add_argument(
        "--keep-valid-candidates", dest="keep_valid", action="store_true",
        default=None, help="keep validation items as test-time candidates",
    )
    p_eval.add_argument(
        "--per-user", dest="per_user", action="store_true", default=None,
        help="include per-user values in the JSON report",
    )
    _add_common(p_eval)

    p_rec = sub.add_parser("recommend", help="emit top-K items for users")
    p_rec.add_argument("splitdir")
    p_rec.add_argument("model_path", metavar="model")
    p_rec.add_argument("--users", required=True, help="comma-separated user tokens")
    p_rec.add_argument("--topk", type=int, help="list length")
    p_rec.add_argument("--out", help="output file (default stdout)")
    _add_common(p_rec)

    p_an = sub.add_parser("analyze", help="distance-geometry report for a model")
    p_an.add_argument("splitdir")
    p_an.add_argument("model_path", metavar="model")
    p_an.add_argument("--samples", type=int, help="sampled (user, item, item) triples")
    p_an.add_argument("--out", help="output file (default stdout)")
    _add_common(p_an)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, environment and flags (flags win)."""
    config = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        if not Path(path).exists():
            raise UsageError(f"config file not found: {path}")
        for lineno, raw in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in config:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            config[key] = _COERCE[key](value.strip())
    for key in config:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            config[key] = _COERCE[key](env)
    for key, value in vars(args).items():
        if key in config and value is not None:
            config[key] = value
    for key in ("command", "input", "outdir", "splitdir", "out", "models", "model_path", "users"):
        if hasattr(args, key):
            config.setdefault("_" + key, getattr(args, key))
    return config


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(part) for part in str(text).split(",") if part != ""]
    except ValueError as exc:
        raise UsageError(f"invalid {what}: {text!r}") from exc
    if not values:
        raise UsageError(f"empty {what}")
    return values


def _parse_ratio(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in str(text).split(","))
    except ValueError as exc:
        raise UsageError(f"invalid ratio: {text!r}") from exc
    if len(parts) != 3 or any(p <= 0 for p in parts) or abs(sum(parts) - 1.0) > 1e-9:
        raise UsageError("ratio must be three positive numbers summing to 1")
    return parts


def _echo(config: dict) -> dict[str, str]:
    return {key: repr(value) for key, value in sorted(config.items()) if not key.startswith("_")}


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_split(args) -> int:
    config = resolve_config(args)
    ratio = _parse_ratio(config["ratio"])
    from . import dataio

    text = Path(args.input).read_text(encoding="utf-8")
    parsed = dataio.parse_interactions(text)
    for lineno, line in parsed.malformed:
        _info(f"warning: skipped malformed line {lineno}: {line!r}")
    dataset = dataio.split(
        parsed.pairs,
        ratio=ratio,
        seed=config["seed"],
        min_user_degree=config["min_user_degree"],
        strategy=config["strategy"],
    )
    dataio.write_split_dir(dataset, args.outdir, config_echo=_echo(config))
    _info(
        f"split: {dataset.index.n_users} users, {dataset.index.n_items} items, "
        f"{dataset.train.nnz}/{dataset.valid.nnz}/{dataset.test.nnz} interactions"
    )
    return 0


def _hyperparams(config):
    from .solver import CoRMLHyperparams

    return CoRMLHyperparams(
        t=config["t"],
        t_u=config["tu"],
        epsilon=config["eps"],
        theta=config["theta"],
        lam=config["lam"],
        rank=config["rank"],
        rho=config["rho"],
        max_iters=config["iters"],
        tol=config["tol"],
        seed=config["seed"],
    )


def cmd_train(args) -> int:
    config = resolve_config(args)
    from . import dataio
    from .signal_models import GfcfModel, fit_ease, truncated_svd
    from .solver import fit_corml
    from .sparse_core import sparsify

    dataset = dataio.read_split_dir(args.splitdir)
    train = dataset.train
    n_users, n_items = train.n_users, train.n_items
    budget = config["nnz_budget"]
    if budget is None:
        budget = 2 * 64 * (n_users + n_items)
        config["nnz_budget"] = budget
    if budget < n_items:
        _info(f"warning: nnz budget {budget} is below the item count {n_items}")
    if n_items > config["max_dense_items"]:
        _info(
            f"warning: {n_items} items exceed max_dense_items="
            f"{config['max_dense_items']}; dense item-item blocks will be large"
        )
    hp = _hyperparams(config)
    name = config["model"]
    log_lines = ["# corml-train v1"] + [
        f"# config {k}={v}" for k, v in sorted(_echo(config).items())
    ]
    if name == "ease":
        model = fit_ease(train, l2=config["theta"])
        weights = sparsify(model.weights, budget)
        model = type(model)(weights, model.l2)
        log_lines.append(f"model\tease\tnnz\t{weights.nnz}")
    elif name == "gfcf":
        rank = min(config["rank"], n_users, n_items)
        factor = truncated_svd(
            train, rank, seed=config["seed"], power_iters=config["power_iters"]
        )
        model = GfcfModel(factor, seed=config["seed"])
        log_lines.append(f"model\tgfcf\trank\t{factor.rank}")
    elif name == "corml":
        model = fit_corml(
            train,
            hp,
            nnz_budget=budget,
            z_step_weights=config["z_weights"],
            g_dense_threshold=config["max_dense_items"],
        )
        log_lines.append("iteration\tprimal_residual\tdual_residual\tobjective")
        for row in model.trace:
            log_lines.append(
                f"{row['iteration']}\t{row['primal_residual']!r}"
                f"\t{row['dual_residual']!r}\t{row['objective']!r}"
            )
        log_lines.append(f"converged\t{model.converged}")
        log_lines.append(f"model\tcorml\tnnz\t{model.item_weights.nnz}")
    else:
        raise UsageError(f"unknown model {name!r}")
    dataio.save_model(model, args.out)
    Path(str(args.out) + ".log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    _info(f"wrote {args.out} ({dataio.file_hash(args.out)})")
    return 0


def cmd_eval(args) -> int:
    config = resolve_config(args)
    from . import dataio
    from .evaluation import METRIC_NAMES, evaluate

    k_list = _parse_int_list(config["k"], "cutoff list")
    dataset = dataio.read_split_dir(args.splitdir)
    reports = []
    multi = len(args.models) > 1
    for model_path in args.models:
        if not Path(model_path).exists():
            raise DataFormatError(f"model file not found: {model_path}")
        model = dataio.load_model(model_path)
        report = evaluate(
            model,
            dataset,
            k_list=k_list,
            mode=config["mode"],
            exclude_valid=not config["keep_valid"],
            per_user=config["per_user"],
            model_hash=dataio.file_hash(model_path),
            config_echo=_echo(config),
        )
        stem = Path(model_path).stem
        prefix = f"{args.out}.{stem}" if multi else str(args.out)
        Path(prefix + ".tsv").write_text(report.to_tsv(), encoding="utf-8")
        Path(prefix + ".json").write_text(report.to_json(), encoding="utf-8")
        reports.append((stem, report))
        _info(f"evaluated {model_path} -> {prefix}.tsv")
    if multi:
        lines = ["metric\t" + "\t".join(stem for stem, _ in reports)]
        for name in METRIC_NAMES:
            for k in reports[0][1].cutoffs:
                row = [f"{name}@{k}"] + [repr(rep.means[name][k]) for _, rep in reports]
                lines.append("\t".join(row))
        Path(str(args.out) + ".compare.tsv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
    return 0


def cmd_recommend(args) -> int:
    config = resolve_config(args)
    from . import dataio
    from .evaluation import rank_topk

    dataset = dataio.read_split_dir(args.splitdir)
    model = dataio.load_model(args.model_path)
    k = config["topk"]
    if k < 1:
        raise UsageError("topk must be at least 1")
    tokens = [tok for tok in str(args.users).split(",") if tok]
    lines = ["# corml-recommend v1"]
    lines += [f"# config {key}={val}" for key, val in sorted(_echo(config).items())]
    index = dataset.index
    known = [(tok, index.user_to_index.get(tok)) for tok in tokens]
    import numpy as np

    for token, u in known:
        if u is None:
            lines.append(f"# {token}: unknown user token")
            continue
        scores = model.score_users(dataset.train, users=np.asarray([u]))[0]
        ranked = rank_topk(scores, dataset.train.row_items(u), k, user=u)
        if ranked.truncated:
            lines.append(f"# {token}: only {ranked.items.size} candidates available")
        for pos, (item, score) in enumerate(zip(ranked.items, ranked.scores), start=1):
            lines.append(f"{token}\t{pos}\t{index.items[int(item)]}\t{score!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_analyze(args) -> int:
    config = resolve_config(args)
    import numpy as np

    from . import dataio
    from .geometry import (
        MetricWeight,
        SignalFeatureSpace,
        distance_residual,
        preference_residual,
    )
    from .sparse_core import degree_power, to_canonical_csr
    import scipy.sparse as sp

    dataset = dataio.read_split_dir(args.splitdir)
    model = dataio.load_model(args.model_path)
    train = dataset.train
    if getattr(model, "kind", None) == "corml":
        hollow = model.item_weights
        strength = model.hyperparams.t
    elif getattr(model, "kind", None) == "gfcf":
        from .signal_models import build_G

        hollow = sp.csr_matrix(build_G(model.factor))
        strength = 0.5
    else:
        raise DataFormatError("analyze requires a symmetric-weight model (gfcf/corml)")
    hollow = to_canonical_csr(hollow)

    d = train.item_degrees
    positive = np.flatnonzero(d > 0)
    n_excluded = int(train.n_items - positive.size)
    x = degree_power(d.astype(np.float64), -2.0 * strength)
    x[d == 0] = 1.0  # excluded from sampling; keeps the completion well posed
    weight = MetricWeight.complete(hollow, x)
    space = SignalFeatureSpace(train, strength)

    radii = np.asarray(abs(hollow).sum(axis=1)).ravel()
    centers = weight.omega * x
    lower = centers - radii

    rng = np.random.default_rng(config["seed"])
    n_samples = config["samples"]
    users = rng.integers(0, train.n_users, size=n_samples)
    case_counts = {1: 0, 2: 0, 3: 0}
    case_viol = {1: 0.0, 2: 0.0, 3: 0.0}
    for u in np.sort(users):
        u = int(u)
        i, j = (int(v) for v in rng.choice(positive, size=2, replace=False))
        res = distance_residual(space, weight, u, i, j)
        pref = preference_residual(space, hollow, u, i, j)
        in_i = train.has_interaction(u, i)
        in_j = train.has_interaction(u, j)
        if not in_i and not in_j:
            case, expected = 1, -2.0 * pref
        elif in_i and not in_j:
            case, expected = 2, -2.0 * pref - 2.0 * weight.omega * x[i]
        elif in_i and in_j:
            case, expected = 3, -2.0 * pref - 2.0 * weight.omega * (x[i] - x[j])
        else:  # j interacted, i not: case 2 with the roles swapped
            case, expected = 2, -2.0 * pref + 2.0 * weight.omega * x[j]
        case_counts[case] += 1
        case_viol[case] = max(case_viol[case], abs(res - expected))

    lines = ["# corml-analyze v1"]
    lines += [f"# config {key}={val}" for key, val in sorted(_echo(config).items())]
    lines.append(f"omega\t{weight.omega!r}")
    lines.append(f"hollow_nnz\t{hollow.nnz}")
    lines.append(f"zero_degree_items_excluded\t{n_excluded}")
    lines.append(f"gershgorin_min_lower\t{float(lower.min()) if lower.size else 0.0!r}")
    lines.append(
        f"gershgorin_max_upper\t{float((centers + radii).max()) if radii.size else 0.0!r}"
    )
    lines.append(f"gershgorin_negative_lower_count\t{int(np.count_nonzero(lower < -1e-12))}")
    for case in (1, 2, 3):
        lines.append(f"case{case}_count\t{case_counts[case]}")
        lines.append(f"case{case}_max_violation\t{case_viol[case]!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "recommend": cmd_recommend,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        threads = getattr(args, "threads", None)
        if threads is None:
            env = os.environ.get(ENV_PREFIX + "THREADS")
            threads = int(env) if env else None
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return _COMMANDS[args.command](args)
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FactorizationError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except CormlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
