"""Command-line interface.

Subcommands: split, train, eval, baseline, synth, analyze, gradcheck.
Training reads a flat key=value config file; every key can be overridden
with a --key value flag. Each command writes a run manifest (resolved
config, input checksums, seeds) into its output directory before doing
any work, and all outputs land under that directory.

Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .encoder import EdgeIndex
from .graphs import (Graph, GraphFormatError, SplitError, adjacency_features,
                     attach_features, compact_node_ids, identity_features,
                     load_edge_list, load_split_manifest, save_edge_list,
                     save_split_manifest, split_edges)
from .gradcheck import run_gradcheck
from .heuristics import KINDS, HeuristicMethod, evaluate_heuristic
from .losses import score_edges
from .metrics import summarize_runs
from .synthetic import (SbmSpec, embedding_correlation, expected_average_degree,
                        generate_sbm, tune_q)
from .training import (NonFiniteLossError, TrainConfig, compute_embeddings,
                       evaluate, evaluate_embeddings, load_checkpoint,
                       run_link_prediction, save_checkpoint, train)

USAGE_ERROR = 2
RUNTIME_ERROR = 1

# config-file keys for `train` (all overridable via --key value)
TRAIN_KEYS: dict[str, type] = {
    "edge_file": str,
    "features": str,        # path, or "identity" / "adjacency"
    "split_file": str,
    "val_frac": float,
    "test_frac": float,
    "mode": str,
    "k": int,
    "d": int,
    "t": int,
    "m": int,
    "lr": float,
    "lr_phi": float,
    "lambda_mi": float,
    "epochs": int,
    "seed": int,
    "seeds": int,
    "eval_every": int,
    "variant": str,
    "sampled_recon": bool,
}

TRAIN_DEFAULTS: dict = {
    "features": "identity",
    "split_file": "",
    "val_frac": 0.05,
    "test_frac": 0.10,
    "mode": "dgae",
    "k": 5,
    "d": 64,
    "t": 3,
    "m": 5,
    "lr": 0.01,
    "lr_phi": 0.005,
    "lambda_mi": 0.1,
    "epochs": 200,
    "seed": 0,
    "seeds": 1,
    "eval_every": 1,
    "variant": "full",
    "sampled_recon": False,
}


class UsageError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _coerce(key: str, text: str):
    kind = TRAIN_KEYS[key]
    if kind is bool:
        return _parse_bool(text)
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}")


def load_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; keys must be known."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in TRAIN_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, text)
    return values


def apply_overrides(values: dict, extras: list[str]) -> dict:
    """--key value pairs left over from argparse."""
    out = dict(values)
    i = 0
    while i < len(extras):
        flag = extras[i]
        if not flag.startswith("--"):
            raise UsageError(f"unexpected argument {flag!r}")
        key = flag[2:].replace("-", "_")
        if key not in TRAIN_KEYS:
            raise UsageError(f"unknown override {flag!r}")
        if i + 1 >= len(extras):
            raise UsageError(f"missing value for {flag!r}")
        out[key] = _coerce(key, extras[i + 1])
        i += 2
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict,
                   dataset_paths: dict, seed_list: list[int]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "dataset_paths": dataset_paths,
        "seed_list": seed_list,
        "out_dir": str(out_dir),
        "input_checksums": {str(p): _sha256(p) for p in dataset_paths.values()
                            if p and Path(p).is_file()},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _dump_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_dataset(edge_file: str, features: str) -> Graph:
    graph = load_edge_list(edge_file)
    if features == "identity":
        return identity_features(graph)
    if features == "adjacency":
        return adjacency_features(graph)
    if features:
        return attach_features(graph, features)
    return graph


def _train_config_from(values: dict) -> TrainConfig:
    return TrainConfig(
        mode=values["mode"], num_channels=values["k"], channel_dim=values["d"],
        routing_iters=values["t"], inner_steps=values["m"], lr=values["lr"],
        lr_phi=values["lr_phi"], lambda_mi=values["lambda_mi"],
        epochs=values["epochs"], seed=values["seed"],
        eval_every=values["eval_every"], variant=values["variant"],
        sampled_recon=values["sampled_recon"],
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_split(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    out = Path(args.out)
    config = {"edge_file": args.edge_file, "val": args.val, "test": args.test,
              "seed": args.seed, "remap_ids": args.remap_ids}
    write_manifest(out, "split", config, {"edge_file": args.edge_file}, [args.seed])
    graph = load_edge_list(args.edge_file)
    if args.remap_ids:
        graph, mapping = compact_node_ids(graph)
        _dump_json(out / "id_mapping.json", {str(k): v for k, v in mapping.items()})
    split = split_edges(graph, args.val, args.test, args.seed)
    save_split_manifest(split, out / "split.json")
    print(f"split: {len(split.train_pos)} train / {len(split.val_pos)} val / "
          f"{len(split.test_pos)} test positives -> {out / 'split.json'}")
    return 0


def cmd_train(args, extras) -> int:
    values = dict(TRAIN_DEFAULTS)
    values.update(load_config_file(args.config))
    values = apply_overrides(values, extras)
    if "edge_file" not in values:
        raise UsageError("config needs edge_file=<path>")
    out = Path(args.out)
    base_seed = values["seed"]
    seed_list = [base_seed + i for i in range(values["seeds"])]
    write_manifest(out, "train", values,
                   {"edge_file": values["edge_file"],
                    "features": values["features"] if values["features"] not in
                    ("identity", "adjacency") else "",
                    "split_file": values["split_file"]},
                   seed_list)
    graph = load_dataset(values["edge_file"], values["features"])
    config = _train_config_from(values)

    if values["split_file"]:
        # single explicit split: run every seed against it
        split = load_split_manifest(values["split_file"], graph)
        runs, models = [], []
        for seed in seed_list:
            model = _train_one(graph, split, replace(config, seed=seed), out)
            models.append(model)
            runs.append(evaluate(model, split.test_pos, split.test_neg))
        summary = summarize_runs(runs)
        summary["seeds"] = seed_list
        summary["best_epochs"] = [m.best_epoch for m in models]
    else:
        summary, models = run_link_prediction(
            graph, config, values["val_frac"], values["test_frac"], seed_list)
        for model in models:
            _write_run_outputs(out, model)
    summary["config"] = values
    _dump_json(out / "metrics.json", summary)
    print(f"train: auc {summary['auc']['mean']:.4f} +/- {summary['auc']['std']:.4f}, "
          f"ap {summary['ap']['mean']:.4f} +/- {summary['ap']['std']:.4f} "
          f"over {len(seed_list)} seed(s) -> {out / 'metrics.json'}")
    return 0


def _train_one(graph, split, config, out: Path):
    model = train(graph, split, config)
    _write_run_outputs(out, model)
    return model


def _write_run_outputs(out: Path, model) -> None:
    run_dir = out / f"run_{model.config.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for record in model.history:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
    save_checkpoint(run_dir / "checkpoint.npz", model)


def cmd_eval(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    out = Path(args.out)
    config_summary = {"checkpoint": args.checkpoint, "edges": args.edges,
                      "features": args.features, "split": args.split,
                      "score_all_pairs": bool(args.score_all_pairs)}
    write_manifest(out, "eval", config_summary,
                   {"checkpoint": args.checkpoint, "edges": args.edges,
                    "split": args.split or ""}, [])
    params, _, config, meta = load_checkpoint(args.checkpoint)
    graph = load_dataset(args.edges, args.features)
    split = load_split_manifest(args.split, graph)
    edge_index = EdgeIndex.from_graph(split.message_graph)
    z = compute_embeddings(graph, edge_index, params, config)
    result = {"best_epoch": meta["best_epoch"], "config": meta["config"]}
    metrics = evaluate_embeddings(z, split.test_pos, split.test_neg)
    result["test"] = {"auc": metrics.auc, "ap": metrics.ap}
    if split.val_pos:
        val = evaluate_embeddings(z, split.val_pos, split.val_neg)
        result["val"] = {"auc": val.auc, "ap": val.ap}
    _dump_json(out / "eval.json", result)
    if args.score_all_pairs:
        _write_all_pair_scores(z, Path(args.score_all_pairs))
    print(f"eval: test auc {metrics.auc:.4f}, ap {metrics.ap:.4f} -> {out / 'eval.json'}")
    return 0


def _write_all_pair_scores(z: np.ndarray, path: Path) -> None:
    """Scores for the entire candidate set (every unordered pair)."""
    n = z.shape[0]
    if n > 3000:
        raise MemoryError("all-pair scoring is limited to N <= 3000")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("u,v,score\n")
        for u in range(n):
            probs = score_edges(z, [(u, v) for v in range(u + 1, n)])
            for offset, p in enumerate(probs):
                fh.write(f"{u},{u + 1 + offset},{p:.6f}\n")


def cmd_baseline(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in KINDS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(KINDS)}")
    out = Path(args.out)
    config = {"edge_file": args.edge_file, "methods": methods, "seeds": args.seeds,
              "val": args.val, "test": args.test, "beta": args.beta,
              "max_len": args.max_len, "c": args.c, "iters": args.iters}
    seed_list = [args.seed + i for i in range(args.seeds)]
    write_manifest(out, "baseline", config, {"edge_file": args.edge_file}, seed_list)
    graph = load_edge_list(args.edge_file)
    dataset = Path(args.edge_file).stem
    rows = []
    for kind in methods:
        method = HeuristicMethod(kind=kind, beta=args.beta, max_len=args.max_len,
                                 c=args.c, iters=args.iters)
        runs = []
        for seed in seed_list:
            split = split_edges(graph, args.val, args.test, seed)
            runs.append(evaluate_heuristic(graph, split, method))
        summary = summarize_runs(runs)
        rows.append((kind, summary))
        print(f"baseline {kind}: auc {summary['auc']['mean']:.4f} "
              f"+/- {summary['auc']['std']:.4f}")
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write(f"method,{dataset}\n")
        for kind, summary in rows:
            fh.write(f"{kind},{100 * summary['auc']['mean']:.2f} "
                     f"± {100 * summary['auc']['std']:.2f}\n")
    _dump_json(out / "metrics.json",
               {kind: summary for kind, summary in rows})
    return 0


def cmd_synth(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    p_within = tuple(float(p) for p in args.p_list.split(","))
    if args.q is not None:
        q = args.q
    else:
        lo, hi = (float(x) for x in args.target_degree.split(","))
        q = tune_q(args.communities, args.size, p_within, (lo, hi))
    out = Path(args.out)
    config = {"communities": args.communities, "size": args.size,
              "p_list": list(p_within), "q": q, "seed": args.seed}
    write_manifest(out, "synth", config, {}, [args.seed])
    spec = SbmSpec(num_communities=args.communities, community_size=args.size,
                   p_within=p_within, q_between=q, seed=args.seed)
    graph, labels = generate_sbm(spec)
    save_edge_list(graph, out / "edges.txt")
    _write_feature_csv(graph.features, out / "features.csv")
    np.savetxt(out / "labels.csv", labels[:, None], fmt="%d")
    observed = 2.0 * graph.num_edges / graph.num_nodes
    report = {
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "q": q,
        "expected_average_degree": expected_average_degree(
            args.communities, args.size, p_within, q),
        "observed_average_degree": observed,
    }
    _dump_json(out / "report.json", report)
    print(f"synth: N={graph.num_nodes}, E={graph.num_edges}, "
          f"avg degree {observed:.2f} -> {out}")
    return 0


def _write_feature_csv(features: np.ndarray, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in features:
            fh.write(",".join(repr(x) if x % 1 else str(int(x)) for x in row))
            fh.write("\n")


def cmd_analyze(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    out = Path(args.out)
    config = {"checkpoint": args.checkpoint, "edges": args.edges,
              "features": args.features, "split": args.split or ""}
    write_manifest(out, "analyze", config,
                   {"checkpoint": args.checkpoint, "edges": args.edges,
                    "split": args.split or ""}, [])
    params, _, train_config, meta = load_checkpoint(args.checkpoint)
    graph = load_dataset(args.edges, args.features)
    if args.split:
        split = load_split_manifest(args.split, graph)
        message = split.message_graph
    else:
        message = graph
    edge_index = EdgeIndex.from_graph(message)
    z = compute_embeddings(graph, edge_index, params, train_config)
    report = embedding_correlation(z, train_config.num_channels,
                                   train_config.channel_dim)
    np.savetxt(out / "correlation.csv", report.corr, delimiter=",", fmt="%.6f")
    _dump_json(out / "analysis.json", {
        "block_contrast": report.block_contrast,
        "constant_columns": list(report.constant_columns),
        "num_channels": train_config.num_channels,
        "channel_dim": train_config.channel_dim,
        "best_epoch": meta["best_epoch"],
    })
    print(f"analyze: block_contrast {report.block_contrast:.3f} -> {out}")
    return 0


def cmd_gradcheck(args, extras) -> int:
    if extras:
        raise UsageError(f"unexpected arguments: {extras}")
    if args.trials == 0:
        print("gradcheck: 0 trials requested, vacuous pass")
        return 0

    def progress(done, total, err):
        if done % 10 == 0 or done == total:
            print(f"gradcheck: {done}/{total} trials, running max err {err:.2e}",
                  flush=True)

    report = run_gradcheck(trials=args.trials, n_max=args.n_max, seed=args.seed,
                           progress=progress)
    ok = report["max_rel_err"] < args.tolerance
    verdict = "PASS" if ok else "FAIL"
    print(f"gradcheck: trials={report['trials']} "
          f"max_rel_err={report['max_rel_err']:.3e} "
          f"tolerance={args.tolerance:.0e} elapsed={report['elapsed_sec']:.1f}s "
          f"-> {verdict}")
    if not ok:
        print(f"worst instance: {report['worst_instance']}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disenlink",
        description="Disentangled graph auto-encoder link prediction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split an edge list into train/val/test")
    p.add_argument("edge_file")
    p.add_argument("--val", type=float, default=0.05)
    p.add_argument("--test", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--remap-ids", action="store_true",
                   help="compact sparse node ids (mapping saved next to the split)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a key=value config file")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, allow_extras=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("checkpoint")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", default="identity")
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--score-all-pairs", default="",
                   help="also dump sigmoid scores for every node pair to this CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="run heuristic link predictors")
    p.add_argument("edge_file")
    p.add_argument("--methods", default=",".join(KINDS))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val", type=float, default=0.0)
    p.add_argument("--test", type=float, default=0.10)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--max-len", type=int, default=10)
    p.add_argument("--c", type=float, default=0.8)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="generate a stochastic-block-model dataset")
    p.add_argument("--communities", type=int, default=5)
    p.add_argument("--size", type=int, default=500)
    p.add_argument("--p-list", default="0.01,0.02,0.03,0.04,0.05")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--target-degree", default="18,20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="embedding-correlation disentanglement report")
    p.add_argument("checkpoint")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", default="adjacency")
    p.add_argument("--split", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    if extras and not getattr(args, "allow_extras", False):
        parser.error(f"unrecognized arguments: {' '.join(extras)}")
    try:
        return args.func(args, extras)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (GraphFormatError, SplitError, NonFiniteLossError, FileNotFoundError,
            MemoryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
