"""Command-line entry point: ``disentrec <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio, factors as fct, harness
from .learners import make_learner
from .learners.base import LearnerConfig

log = logging.getLogger("disentrec")


def _parse_override(items) -> dict:
    out = {}
    for item in items or []:
        key, _, raw = item.partition("=")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config(args) -> LearnerConfig:
    if args.config:
        d = json.loads(Path(args.config).read_text())
    elif args.model:
        d = {"model": args.model}
    else:
        raise SystemExit("either --config or --model is required")
    d.update(_parse_override(args.set))
    d["seed"] = args.seed
    return LearnerConfig.from_dict(d)


def _settings(args) -> harness.EvalSettings:
    if args.settings:
        return harness.EvalSettings.from_dict(json.loads(Path(args.settings).read_text()))
    return harness.EvalSettings()


def cmd_ingest(args):
    rows = dataio.ingest(args.input, format=args.format)
    rows = dataio.binarize(rows, args.threshold, inclusive=not args.exclusive)
    matrix = dataio.build_matrix(rows, {"source": str(args.input), "threshold": args.threshold})
    if args.min_ipu or args.min_ipi:
        matrix = dataio.kcore_filter(matrix, args.min_ipu, args.min_ipi)
    path = dataio.save_snapshot(matrix, args.out_dir / f"{args.name}.snap")
    print(f"{path}: {matrix.n_users} users, {matrix.n_items} items, {matrix.nnz} interactions")


def cmd_factors(args):
    inter = dataio.load_snapshot(args.snapshot)
    if args.shelves:
        if not args.shelf_map:
            raise SystemExit("--shelves requires --shelf-map")
        shelves = fct.read_tag_file(args.shelves, inter.item_ids)
        fm = fct.shelf_factors(args.shelf_map, inter, shelves, args.fraction)
    elif args.tags:
        tags = fct.read_tag_file(args.tags, inter.item_ids, genome=args.genome)
        tags = fct.top_tags(tags, args.top_tags, by="relevance" if args.genome else "items")
        model = fct.kmeans_tags(tags, args.k, seed=args.seed)
        clusters = fct.assign_items(model, tags, args.relevance_threshold)
        fm = fct.assign_users(inter, clusters, args.fraction)
        fm.provenance.update(k=args.k, seed=args.seed, inertia=model.inertia)
    else:
        raise SystemExit("either --tags or --shelves is required")
    fm = fct.drop_degenerate(fm)
    path = fct.save_factors(fm, args.out_dir / f"{args.name}.csv")
    print(f"{path}: {fm.n_users} users, {fm.K} factors")


def cmd_synth(args):
    from .synth import SynthSpec, generate, random_orthogonal
    spec = SynthSpec(n_users=args.n_users, n_items=args.n_items, K=args.K, M=args.M,
                     noise_sigma=args.noise_sigma, items_per_factor=args.items_per_factor,
                     interactions_per_user=args.interactions_per_user, seed=args.seed)
    if args.mixing == "rotation":
        spec.mixing = random_orthogonal(spec.M, args.seed)
    inter, fm, rep = generate(spec)
    dataio.save_snapshot(inter, args.out_dir / f"{args.name}.snap")
    fct.save_factors(fm, args.out_dir / f"{args.name}.factors.csv")
    rep.save_csv(args.out_dir / f"{args.name}.repr.csv")
    print(f"{args.out_dir / args.name}.*: {inter.n_users} users, {inter.n_items} items, K={fm.K}")


def cmd_tune(args):
    inter = dataio.load_snapshot(args.snapshot)
    split = dataio.split_per_user(inter, seed=args.seed)
    space = harness.SearchSpace(n_trials=args.n_trials)
    result = harness.tune(args.model, split, space, seed=args.seed, base=_parse_override(args.set),
                          strategy=args.strategy,
                          log_path=args.out_dir / f"{args.model}.trials.json")
    path = args.out_dir / f"{args.model}.config.json"
    harness._atomic_write_json(path, result.config.to_dict())
    print(f"{path}: validation ndcg@100 {result.score:.4f} after {result.n_evaluations} evaluations")


def cmd_train(args):
    cfg = _config(args)
    inter = dataio.load_snapshot(args.snapshot)
    split = dataio.split_per_user(inter, seed=args.seed)
    learner = make_learner(cfg).fit(split.train, split.validation)
    stem = f"{cfg.model}.seed{args.seed}"
    if hasattr(learner, "save"):
        learner.save(args.out_dir / f"{stem}.ckpt")
    if cfg.model != "top_popular":
        learner.encode(split.train).save_csv(args.out_dir / f"{stem}.repr.csv")
    print(f"{args.out_dir / stem}.*: trained {cfg.model}")


def cmd_evaluate(args):
    cfg = _config(args)
    inter = dataio.load_snapshot(args.snapshot)
    fm = fct.load_factors(args.factors)
    ds = harness.Dataset(args.dataset or Path(args.snapshot).stem, inter, fm)
    rec = harness.evaluate_run(cfg.model, ds, cfg, args.seed, _settings(args))
    path = harness.save_record(rec, args.out_dir)
    print(f"{path}: ndcg@10 {rec.effectiveness['scores']['ndcg@10']:.4f}")


def cmd_correlate(args):
    from .stats import correlation_grid, write_grid_csv
    records = [r.to_dict() for r in harness.load_records(args.records) if r.status == "ok"]
    for grouping in ("by_dataset", "by_model") if args.grouping == "both" else (args.grouping,):
        path = write_grid_csv(correlation_grid(records, grouping), args.out_dir / f"rmcorr_{grouping}.csv",
                              grouping)
        print(path)


def cmd_report(args):
    bundle = harness.report(harness.load_records(args.records), args.out_dir)
    for name in bundle:
        print(args.out_dir / name)


def cmd_run(args):
    records = harness.run_from_config(args.config, args.out_dir if args.out_dir_given else None,
                                      args.workers)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records, {failed} failed")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the flags with suppressed defaults so they do not
    # overwrite values given before the subcommand name
    def d(value):
        return argparse.SUPPRESS if suppress else value

    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=d(0), help="seed for splitting, init and sampling")
    g.add_argument("--workers", type=int, default=d(1), help="parallel worker processes")
    g.add_argument("--out-dir", type=Path, default=d(None), help="output directory (default: .)")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="disentrec", parents=[_global_flags(suppress=False)],
                                description="Disentanglement and interpretability of recommender representations.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def model_args(sp):
        sp.add_argument("--config", help="LearnerConfig JSON (e.g. from `tune`)")
        sp.add_argument("--model", choices=sorted(harness._RELEVANT))
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    sp = add("ingest", cmd_ingest, "parse raw interactions into a binary snapshot")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=("tsv", "csv", "dat"), default="tsv")
    sp.add_argument("--threshold", type=float, default=1.0)
    sp.add_argument("--exclusive", action="store_true", help="keep ratings strictly above the threshold")
    sp.add_argument("--min-ipu", type=int, default=0)
    sp.add_argument("--min-ipi", type=int, default=0)
    sp.add_argument("--name", default="interactions")

    sp = add("factors", cmd_factors, "derive binary user factors from tags or shelves")
    sp.add_argument("--snapshot", required=True)
    sp.add_argument("--tags")
    sp.add_argument("--genome", action="store_true", help="tag file carries a relevance column")
    sp.add_argument("--top-tags", type=int, default=100)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--relevance-threshold", type=float, default=0.0)
    sp.add_argument("--shelves")
    sp.add_argument("--shelf-map")
    sp.add_argument("--fraction", type=float, default=0.5)
    sp.add_argument("--name", default="factors")

    sp = add("synth", cmd_synth, "generate a synthetic dataset with planted factors")
    sp.add_argument("--n-users", type=int, default=1000)
    sp.add_argument("--n-items", type=int, default=500)
    sp.add_argument("--K", type=int, default=6)
    sp.add_argument("--M", type=int, default=6)
    sp.add_argument("--noise-sigma", type=float, default=0.05)
    sp.add_argument("--items-per-factor", type=int, default=50)
    sp.add_argument("--interactions-per-user", type=int, default=20)
    sp.add_argument("--mixing", choices=("identity", "rotation"), default="identity")
    sp.add_argument("--name", default="synth")

    sp = add("tune", cmd_tune, "search hyperparameters on validation NDCG@100")
    sp.add_argument("--snapshot", required=True)
    sp.add_argument("--model", required=True, choices=sorted(harness._RELEVANT))
    sp.add_argument("--n-trials", type=int, default=50)
    sp.add_argument("--strategy", choices=("random", "tpe"), default="random")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="fixed config field")

    sp = add("train", cmd_train, "train one model and export its representation")
    sp.add_argument("--snapshot", required=True)
    model_args(sp)

    sp = add("evaluate", cmd_evaluate, "full evaluation of one (model, dataset, seed) into a RunRecord")
    sp.add_argument("--snapshot", required=True)
    sp.add_argument("--factors", required=True)
    sp.add_argument("--dataset")
    sp.add_argument("--settings", help="EvalSettings JSON")
    model_args(sp)

    sp = add("correlate", cmd_correlate, "rmcorr grids over a directory of RunRecords")
    sp.add_argument("--records", required=True)
    sp.add_argument("--grouping", choices=("by_dataset", "by_model", "both"), default="both")

    sp = add("report", cmd_report, "tables and grids from a directory of RunRecords")
    sp.add_argument("--records", required=True)

    sp = add("run", cmd_run, "tune and run the matrix described by a JSON run configuration")
    sp.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.out_dir_given = args.out_dir is not None
    args.out_dir = args.out_dir or Path(".")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
