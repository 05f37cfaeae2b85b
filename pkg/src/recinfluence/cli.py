"""Command-line front end orchestrating the pipeline stages.

Stages communicate through on-disk artifacts (dataset dump, model dump,
influence CSV, feature CSV, tree JSON) so long runs are resumable. Every
artifact gets a sidecar with the fully resolved configuration and the input
dataset's content hash. Defaults < config file < command-line flags.

Exit codes: 0 success, 1 computation failure, 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, artifacts, features, influence, predictor
from .data import (FORMATS, DatasetError, compute_stats, load_dataset,
                   load_ratings, sample_items, sample_users,
                   save_dataset)
from .recommender import (ModelConfig, TrainingError, top_items,
                          train_knn, train_test_split, evaluate)


class ConfigError(ValueError):
    """Raised for malformed config files or unknown keys."""


DEFAULTS = {
    "data.format": "tsv",
    "data.sep": ",",
    "data.columns": "user,item,rating",
    "data.has_header": False,
    "data.sample_users": 0,
    "data.sample_items": 0,
    "data.item_sample_mode": "random",
    "algo": "knn",
    "knn.k": 20,
    "knn.similarity": "pearson",
    "nmf.factors": 8,
    "nmf.iters": 200,
    "nmf.rel_tol": 1e-5,
    "nmf.masked": True,
    "seed": 0,
    "list.length": 10,
    "influence.workers": 1,
    "influence.warm_start": False,
    "influence.warm_iters": 20,
    "influence.top_k": "10",
    "influence.thetas": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
    "features.similarity": "pearson",
    "features.user_distance": "cosine",
    "features.item_distance": "cosine",
    "features.epsilon": 0.0,
    "features.epsilon_quantile": 0.25,
    "tree.max_depth": 8,
    "tree.min_samples_leaf": 5,
    "tree.holdout_fraction": 0.0,
    "mds.distance": "cosine",
    "mds.max_points": 2000,
    "mds.segments": 4,
    "mds.refine_iters": 0,
    "eval.test_fraction": 0.2,
    "eval.relevance_threshold": 4.0,
    "out_dir": ".",
}

# argparse destination -> config key
FLAG_KEYS = {
    "format": "data.format",
    "sep": "data.sep",
    "columns": "data.columns",
    "has_header": "data.has_header",
    "sample_users": "data.sample_users",
    "algo": "algo",
    "k": "knn.k",
    "similarity": "knn.similarity",
    "factors": "nmf.factors",
    "iters": "nmf.iters",
    "masked": "nmf.masked",
    "seed": "seed",
    "l": "list.length",
    "workers": "influence.workers",
    "warm_start": "influence.warm_start",
    "warm_iters": "influence.warm_iters",
    "top_k": "influence.top_k",
    "thetas": "influence.thetas",
    "epsilon": "features.epsilon",
    "epsilon_quantile": "features.epsilon_quantile",
    "max_depth": "tree.max_depth",
    "min_samples_leaf": "tree.min_samples_leaf",
    "holdout_fraction": "tree.holdout_fraction",
    "sample_items": "data.sample_items",
    "item_sample_mode": "data.item_sample_mode",
    "distance": "mds.distance",
    "max_points": "mds.max_points",
    "segments": "mds.segments",
    "refine_iters": "mds.refine_iters",
    "test_fraction": "eval.test_fraction",
    "relevance_threshold": "eval.relevance_threshold",
    "out_dir": "out_dir",
}


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines with dotted section keys; # comments."""
    cfg = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        parsed = _parse_value(value)
        if isinstance(DEFAULTS[key], str):
            parsed = str(parsed)
        cfg[key] = parsed
    return cfg


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[key] = value
    return cfg


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(algorithm=cfg["algo"], k=cfg["knn.k"],
                       similarity=cfg["knn.similarity"],
                       factors=cfg["nmf.factors"], seed=cfg["seed"],
                       n_iters=cfg["nmf.iters"], rel_tol=cfg["nmf.rel_tol"],
                       masked=cfg["nmf.masked"])


def feature_config(cfg: dict) -> features.FeatureConfig:
    epsilon = cfg["features.epsilon"] or None
    return features.FeatureConfig(
        similarity=cfg["features.similarity"],
        user_distance=cfg["features.user_distance"],
        item_distance=cfg["features.item_distance"],
        epsilon=epsilon,
        epsilon_quantile=cfg["features.epsilon_quantile"],
        seed=cfg["seed"])


def _floats(csv_text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(csv_text).split(",") if tok)


def _ints(csv_text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(csv_text).split(",") if tok)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _subsample(cfg: dict, ds):
    if cfg["data.sample_users"]:
        ds = sample_users(ds, cfg["data.sample_users"], cfg["seed"])
    if cfg["data.sample_items"]:
        ds = sample_items(ds, cfg["data.sample_items"],
                          mode=cfg["data.item_sample_mode"],
                          seed=cfg["seed"])
    return ds


def _load(cfg: dict, dataset_path):
    return _subsample(cfg, load_dataset(dataset_path))


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = load_ratings(args.input, format=cfg["data.format"],
                      sep=cfg["data.sep"],
                      columns=tuple(cfg["data.columns"].split(",")),
                      has_header=cfg["data.has_header"])
    ds = _subsample(cfg, ds)
    path = save_dataset(ds, out / "dataset.tsv")
    artifacts.write_sidecar(path, cfg, artifacts.dataset_hash(ds),
                            {"stats": compute_stats(ds).to_dict()})
    stats = compute_stats(ds)
    print(f"ingested {stats.n_ratings} ratings: {stats.n_users} users x "
          f"{stats.n_items} items, sparsity {stats.sparsity:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = _load(cfg, args.dataset)
    model = model_config(cfg).train(ds)
    artifacts.save_model(model, out / "model")
    artifacts.write_sidecar(out / "model.json", cfg,
                            artifacts.dataset_hash(ds))
    print(f"trained {model.algorithm} model on {ds.n_users} users")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = _load(cfg, args.dataset)
    train, test = train_test_split(ds, cfg["eval.test_fraction"], cfg["seed"])
    model = model_config(cfg).train(train)
    metrics = evaluate(model, test, cfg["list.length"],
                       cfg["eval.relevance_threshold"])
    payload = {"config": cfg, "dataset_sha256": artifacts.dataset_hash(ds),
               "metrics": metrics}
    (out / "evaluate.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n",
        encoding="utf-8")
    print(f"precision_at_l={metrics['precision_at_l']!r} "
          f"recall_at_l={metrics['recall_at_l']!r}")
    return 0


def cmd_influence(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = _load(cfg, args.dataset)
    mc = model_config(cfg)
    l = cfg["list.length"]
    report = influence.influence_all(
        ds, mc, l, workers=cfg["influence.workers"],
        warm_start=cfg["influence.warm_start"],
        warm_iters=cfg["influence.warm_iters"])
    ds_hash = artifacts.dataset_hash(ds)
    path = artifacts.write_influence_csv(report, ds, out / "influence.csv")
    artifacts.write_sidecar(path, cfg, ds_hash, report.to_meta())
    thetas = _floats(cfg["influence.thetas"])
    # top sets larger than the dataset clamp to "everyone"
    top_ks = sorted({min(t, ds.n_users) for t in
                     _ints(cfg["influence.top_k"])})
    curves = [influence.group_influence(
                  ds, mc, report, top_k, thresholds=thetas, l=l,
                  warm_start=cfg["influence.warm_start"],
                  warm_iters=cfg["influence.warm_iters"])
              for top_k in top_ks]
    gpath = artifacts.write_group_curves_csv(curves,
                                             out / "group_influence.csv")
    artifacts.write_sidecar(gpath, cfg, ds_hash, report.to_meta())
    print(f"influence computed for {ds.n_users} users "
          f"({len(report.failures)} failures)")
    return 0


def cmd_features(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = _load(cfg, args.dataset)
    mc = model_config(cfg)
    l = cfg["list.length"]
    model = mc.train(ds)
    if model.algorithm == "knn":
        knn_model = model
    else:
        knn_model = train_knn(ds, cfg["knn.k"], cfg["knn.similarity"])
    lists = [frozenset(int(i) for i in top_items(model, u, l))
             for u in range(ds.n_users)]
    table = features.extract_all(ds, knn_model, lists, feature_config(cfg))
    path = artifacts.write_features_csv(table, out / "features.csv")
    artifacts.write_sidecar(path, cfg, artifacts.dataset_hash(ds),
                            {"feature_config": table.config})
    print(f"extracted {table.values.shape[1]} features for "
          f"{table.n_users} users")
    return 0


def cmd_fit_tree(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ids, x = artifacts.read_features_csv(args.features)
    tids, y = artifacts.read_influence_csv(args.influence)
    if ids != tids:
        raise DatasetError("feature and influence tables disagree on users")
    ok = ~np.isnan(y)
    x, y = x[ok], y[ok]
    holdout = cfg["tree.holdout_fraction"]
    meta = {}
    if holdout:
        rng = np.random.default_rng(cfg["seed"])
        perm = rng.permutation(len(y))
        n_test = int(np.floor(holdout * len(y)))
        if not 0 < n_test < len(y) - 1:
            raise DatasetError("holdout fraction leaves too few rows")
        test, fit = perm[:n_test], perm[n_test:]
        tree = predictor.fit_tree(
            x[fit], y[fit], max_depth=cfg["tree.max_depth"],
            min_samples_leaf=cfg["tree.min_samples_leaf"])
        meta["holdout_metrics"] = predictor.fit_metrics(tree, x[test],
                                                        y[test])
    else:
        tree = predictor.fit_tree(
            x, y, max_depth=cfg["tree.max_depth"],
            min_samples_leaf=cfg["tree.min_samples_leaf"])
    tree_path = artifacts.write_tree_json(tree, out / "tree.json")
    bpath = artifacts.write_boundaries_csv(predictor.export_boundaries(tree),
                                           out / "boundaries.csv")
    meta.update({"r2": tree.r2, "mse": tree.mse,
                 "importances": [float(v) for v in tree.importances]})
    artifacts.write_sidecar(tree_path, cfg, "", meta)
    artifacts.write_sidecar(bpath, cfg, "", meta)
    print(f"tree depth {tree.depth}, r2={tree.r2!r} mse={tree.mse!r}")
    return 0


def cmd_mds(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds = _load(cfg, args.dataset)
    ids, infl = artifacts.read_influence_csv(args.influence)
    if list(ids) != list(ds.user_ids):
        raise DatasetError("influence report does not match the dataset")
    embedding = analysis.mds_embed(ds, distance=cfg["mds.distance"],
                                   max_points=cfg["mds.max_points"],
                                   seed=cfg["seed"],
                                   refine_iters=cfg["mds.refine_iters"])
    key = np.where(np.isnan(infl), -np.inf, infl)
    ranking = np.lexsort((np.arange(len(infl)), -key))
    loaded = influence.InfluenceReport(model_config(cfg), cfg["list.length"],
                                       infl, ranking, ())
    labels = analysis.segment_by_influence(loaded, cfg["mds.segments"])
    embedding = replace(embedding,
                        segments=labels[embedding.user_indices])
    ds_hash = artifacts.dataset_hash(ds)
    epath = artifacts.write_embedding_csv(embedding, ds, infl, labels,
                                          out / "embedding.csv")
    artifacts.write_sidecar(epath, cfg, ds_hash,
                            {"stress": embedding.stress})
    stats = analysis.centrality_dispersion(embedding, labels)
    dpath = artifacts.write_dispersion_csv(stats, out / "dispersion.csv")
    artifacts.write_sidecar(dpath, cfg, ds_hash)
    print(f"embedded {len(embedding.user_indices)} users, "
          f"stress={embedding.stress!r}")
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    report: dict = {"config": cfg, "stages": {}}
    for name in ("influence", "group_influence", "features", "embedding",
                 "dispersion", "boundaries"):
        path = out / f"{name}.csv"
        if path.exists():
            header, rows = artifacts.read_csv(path)
            report["stages"][name] = {"header": header, "rows": rows}
    for name in ("tree", "evaluate"):
        path = out / f"{name}.json"
        if path.exists():
            report["stages"][name] = json.loads(
                path.read_text(encoding="utf-8"))
    if "influence" in report["stages"]:
        vals = [float(r[1]) for r in report["stages"]["influence"]["rows"]]
        finite = [v for v in vals if not np.isnan(v)]
        report["summary"] = {
            "n_users": len(vals),
            "influence_total": sum(finite),
            "influence_max": max(finite) if finite else None,
            "influence_median": float(np.median(finite)) if finite else None,
        }
    (out / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"report written with {len(report['stages'])} stages")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--workers", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--algo", choices=("knn", "nmf"))
    model.add_argument("--k", type=int)
    model.add_argument("--similarity", choices=("pearson", "cosine"))
    model.add_argument("--factors", type=int)
    model.add_argument("--iters", type=int)
    model.add_argument("--masked", action=argparse.BooleanOptionalAction)
    model.add_argument("--l", type=int)
    model.add_argument("--sample-users", type=int)

    parser = argparse.ArgumentParser(
        prog="recinfluence",
        description="Audit per-user influence on collaborative filtering "
                    "recommendations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="parse a ratings file into the canonical dump")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=sorted(FORMATS))
    p.add_argument("--sep")
    p.add_argument("--columns")
    p.add_argument("--has-header", action=argparse.BooleanOptionalAction)
    p.add_argument("--sample-users", type=int)
    p.add_argument("--sample-items", type=int)
    p.add_argument("--item-sample-mode", choices=("random", "popularity"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common, model],
                       help="fit a model and dump it")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, model],
                       help="precision/recall at l on a held-out split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--relevance-threshold", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("influence", parents=[common, model],
                       help="per-user influence and group curves")
    p.add_argument("--dataset", required=True)
    p.add_argument("--top-k", dest="top_k")
    p.add_argument("--thetas")
    p.add_argument("--warm-start", action=argparse.BooleanOptionalAction)
    p.add_argument("--warm-iters", type=int)
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("features", parents=[common, model],
                       help="per-user feature table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--epsilon-quantile", type=float)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("fit-tree", parents=[common],
                       help="regression tree from features to influence")
    p.add_argument("--features", required=True)
    p.add_argument("--influence", required=True)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--holdout-fraction", type=float)
    p.set_defaults(func=cmd_fit_tree)

    p = sub.add_parser("mds", parents=[common],
                       help="2-D embedding with influence segments")
    p.add_argument("--dataset", required=True)
    p.add_argument("--influence", required=True)
    p.add_argument("--distance", choices=("pearson", "cosine"))
    p.add_argument("--max-points", type=int)
    p.add_argument("--segments", type=int)
    p.add_argument("--refine-iters", type=int)
    p.set_defaults(func=cmd_mds)

    p = sub.add_parser("report", parents=[common],
                       help="bundle stage outputs into one JSON")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
