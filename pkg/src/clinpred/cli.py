"""Command line interface for the triage prediction pipeline.

Subcommands mirror the pipeline stages (split, preprocess, search,
evaluate, explain, report), plus `run` for the whole pipeline, `score`
for one record, `serve` for the local scoring service and `demo-cohort`
to generate a synthetic cohort file in the public dataset's layout.
Stage commands recompute cheap upstream results deterministically from
the seed and resume from persisted artifacts for the expensive ones.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import load_config
from .data import TASKS, SchemaConfig, load_cohort, stratified_split, subcohort_positive
from .errors import ClinpredError
from .models import FAMILIES
from .util import derive_seed

log = logging.getLogger("clinpred")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="pipeline seed")
    parser.add_argument("--cohort", help="cohort CSV path")
    parser.add_argument("--schema", help="schema config file")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel training workers")
    parser.add_argument(
        "--task", choices=list(TASKS) + ["all"], default=None, help="restrict to one task"
    )
    parser.add_argument(
        "--family", choices=list(FAMILIES) + ["all"], default=None,
        help="restrict to one model family",
    )
    parser.add_argument("--n-runs", type=int, dest="n_runs", help="search runs per family")


def _config_from_args(args) -> "PipelineConfig":
    overrides = {
        "seed": getattr(args, "seed", None),
        "cohort": getattr(args, "cohort", None),
        "schema": getattr(args, "schema", None),
        "out_dir": getattr(args, "out_dir", None),
        "workers": getattr(args, "workers", None),
        "n_runs": getattr(args, "n_runs", None),
    }
    task = getattr(args, "task", None)
    if task and task != "all":
        overrides["tasks"] = (task,)
    family = getattr(args, "family", None)
    if family and family != "all":
        overrides["families"] = (family,)
    return load_config(getattr(args, "config", None), overrides)


def cmd_demo_cohort(args):
    from .synthetic import write_demo_cohort

    write_demo_cohort(args.path, n=args.n, seed=args.seed or 0)
    print(f"wrote synthetic cohort ({args.n} patients) to {args.path}")


def cmd_split(args):
    config = _config_from_args(args)
    schema = SchemaConfig.from_file(config.schema) if config.schema else SchemaConfig()
    cohort = load_cohort(config.cohort, schema)
    folds = stratified_split(cohort, (0.5, 0.2, 0.3), seed=derive_seed(config.seed, "split"))
    os.makedirs(config.out_dir, exist_ok=True)
    from .runner import _write_folds

    _write_folds(config.out_dir, cohort, folds)
    sizes = folds.sizes()
    positive = cohort.labels["sars_cov_2"]
    print(f"cohort: {cohort.n} patients, {int(positive.sum())} SARS-CoV-2 positive")
    print(f"folds train/validation/test: {sizes[0]}/{sizes[1]}/{sizes[2]}")
    for name, size in zip(("train", "validation", "test"), sizes):
        idx = folds.indices(name)
        print(f"  {name}: positive rate {100.0 * positive[idx].mean():.2f}%")


def cmd_preprocess(args):
    from . import preprocess
    from .serialize import write_json

    config = _config_from_args(args)
    schema = SchemaConfig.from_file(config.schema) if config.schema else SchemaConfig()
    cohort = load_cohort(config.cohort, schema)
    folds = stratified_split(cohort, (0.5, 0.2, 0.3), seed=derive_seed(config.seed, "split"))
    os.makedirs(config.out_dir, exist_ok=True)
    for task in config.tasks:
        if task == "sars_cov_2":
            task_cohort, task_folds = cohort, folds
        else:
            task_cohort, task_folds = subcohort_positive(cohort, folds)
        train = task_cohort.take(task_folds.indices("train"))
        state = preprocess.fit(train, n_chained_iterations=config.n_chained_iterations)
        path = os.path.join(config.out_dir, f"preprocessor_{task}.json")
        write_json(state.to_jsonable(), path)
        print(
            f"{task}: dropped {len(state.dropped)} columns, "
            f"{len(state.feature_layout)} output features -> {path}"
        )


def cmd_run(args):
    from .runner import run_pipeline

    config = _config_from_args(args)
    manifest = run_pipeline(config)
    print(f"manifest: {os.path.join(config.out_dir, 'manifest.json')}")
    print(f"content hash: {manifest.content_hash}")
    for task, entry in manifest.payload["tasks"].items():
        family = entry["headline_family"]
        metrics = entry["families"][family]["test_metrics"]
        print(f"{task}: headline {family} test AUC {metrics['auc']:.3f}")


def cmd_search(args):
    # one search per requested (task, family) with persisted artifacts
    from .runner import run_pipeline

    config = _config_from_args(args)
    manifest = run_pipeline(config)
    for task, entry in manifest.payload["tasks"].items():
        for family, info in entry["families"].items():
            print(
                f"{task}/{family}: best run {info['run_index']} "
                f"val AUC {info['validation_auc']:.3f} -> {info['artifact_path']}"
            )


def cmd_evaluate(args):
    from .runner import RunManifest

    config = _config_from_args(args)
    manifest_path = os.path.join(config.out_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        print("no manifest found; running the pipeline first", file=sys.stderr)
        from .runner import run_pipeline

        run_pipeline(config)
    manifest = RunManifest.load(config.out_dir)
    for task, entry in manifest.payload["tasks"].items():
        print(f"== {task} (headline: {entry['headline_family']})")
        for family, info in entry["families"].items():
            m = info["test_metrics"]
            print(
                f"  {family}: AUC {m['auc']:.3f} AUPR {m['aupr']:.3f} "
                f"sens {m['sensitivity']:.3f} spec {m['specificity']:.3f} "
                f"spec@95 {m['spec_at_95_sens']:.3f}"
            )


def cmd_explain(args):
    config = _config_from_args(args)
    for task in config.tasks:
        path = os.path.join(config.out_dir, "reports", f"{task}_importance.tsv")
        if not os.path.exists(path):
            print(f"{task}: no importance table at {path}; run the pipeline first")
            continue
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        print(f"== {task} top features")
        for line in lines[1:11]:
            rank, feature, pct = line.split("\t")
            print(f"  {rank:>2}. {feature} ({pct}%)")


def cmd_report(args):
    config = _config_from_args(args)
    reports_dir = os.path.join(config.out_dir, "reports")
    if not os.path.isdir(reports_dir):
        print(f"no reports under {reports_dir}; run the pipeline first", file=sys.stderr)
        sys.exit(1)
    for task in config.tasks:
        path = os.path.join(reports_dir, f"{task}_metrics.tsv")
        if os.path.exists(path):
            print(f"== {task} ({path})")
            with open(path, "r", encoding="utf-8") as fh:
                print(fh.read().rstrip())


def cmd_score(args):
    from .runner import load_headline_artifacts, score_record
    from .serialize import load_artifact

    with open(args.record, "r", encoding="utf-8") as fh:
        feature_map = json.load(fh)
    if args.artifact:
        artifact = load_artifact(args.artifact)
        targets = {artifact.task or "model": (artifact, None)}
    else:
        config = _config_from_args(args)
        loaded = load_headline_artifacts(config.out_dir)
        targets = {
            task: loaded[task] for task in config.tasks if task in loaded
        }
    for task, (artifact, threshold) in targets.items():
        result = score_record(artifact, feature_map, top_k=args.top_k)
        flag = ""
        if threshold is not None:
            flag = f" (threshold {threshold:.4f}, triage {'YES' if result.probability >= threshold else 'no'})"
        print(f"{task}: probability {result.probability:.6f}{flag}")
        for name, delta in result.deltas:
            print(f"    {delta:+.4f}  {name}")


def cmd_serve(args):
    import uvicorn

    from .service import app_from_run_dir

    config = _config_from_args(args)
    app = app_from_run_dir(config.out_dir)
    host, _, port = args.bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="info")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clinpred",
        description="Clinical triage prediction pipeline: train, evaluate, explain, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo-cohort", help="write a synthetic cohort CSV")
    p.add_argument("path", help="output CSV path")
    p.add_argument("--n", type=int, default=5644)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_cohort)

    for name, func, extra in (
        ("split", cmd_split, None),
        ("preprocess", cmd_preprocess, None),
        ("search", cmd_search, None),
        ("run", cmd_run, None),
        ("evaluate", cmd_evaluate, None),
        ("explain", cmd_explain, None),
        ("report", cmd_report, None),
    ):
        p = sub.add_parser(name, help=f"{name} stage")
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="score one record from a JSON feature map")
    _add_common(p)
    p.add_argument("--record", required=True, help="JSON file: {feature name: value|null}")
    p.add_argument("--artifact", help="score with one artifact file instead of a run dir")
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="serve the headline models over HTTP")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1:8000", help="host:port")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ClinpredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
