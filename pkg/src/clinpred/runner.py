"""End-to-end pipeline orchestration.

Stages: load and split the cohort, derive each task's cohort (the full
table for the test-result task, the positive subcohort with inherited
folds for admission and ICU), fit and apply preprocessing per task, run
one hyperparameter search per (family, task), select each family's best
candidate by validation AUC, evaluate every selected model exactly once
against the test fold with bootstrap uncertainty and paired significance
against the test-AUC-best family, explain the per-task headline model,
and persist everything under the output directory.

All randomness derives from the single config seed through named
sub-seeds, so reruns with the same config and cohort bytes reproduce the
manifest hash exactly. The test fold is touched by exactly two stages:
final evaluation and importance.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import preprocess
from .config import PipelineConfig
from .data import (
    FOLD_NAMES,
    CohortTable,
    FoldAssignment,
    RawColumn,
    SchemaConfig,
    load_cohort,
    stratified_split,
    subcohort_positive,
)
from .errors import PipelineError, ValidationError
from .explain import grouped_importance, marginal_importance
from .metrics import (
    METRIC_NAMES,
    ScoredSet,
    bootstrap_index_sets,
    evaluate_scores,
    pairwise_significance,
    select_operating_threshold,
)
from .models import ModelArtifact, predict
from .preprocess import PreprocessorState
from .report import curve_rows, importance_rows, metrics_table_rows, write_tsv
from .serialize import load_artifact, read_json, save_artifact, write_json
from .tuner import SearchSpec, TaskData, run_search, select_best
from .util import derive_seed

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
_VOLATILE_MANIFEST_KEYS = ("created_at", "wall_time_s", "out_dir", "workers")


@dataclass
class RunManifest:
    payload: dict

    @property
    def content_hash(self) -> str:
        return self.payload["content_hash"]

    def task_entry(self, task: str) -> dict:
        return self.payload["tasks"][task]

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        return cls(read_json(os.path.join(out_dir, MANIFEST_NAME)))


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_jsonable(payload) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _fold_arrays(cohort: CohortTable, folds: FoldAssignment):
    out = {}
    for name in FOLD_NAMES:
        idx = folds.indices(name)
        out[name] = (cohort.take(idx), idx)
    return out


@dataclass
class TaskOutcome:
    task: str
    preprocessor: PreprocessorState
    best_candidates: dict  # family -> CandidateRecord
    eval_reports: dict  # family -> EvalReport
    thresholds: dict  # family -> float
    headline_family: str
    selected_by_validation: str
    importance_grouped: object
    importance_raw: object
    artifact_paths: dict = field(default_factory=dict)


def _write_folds(out_dir, cohort: CohortTable, folds: FoldAssignment):
    rows = ["index\tpatient_id\tfold"]
    for i in range(cohort.n):
        pid = cohort.ids[i] if cohort.ids else ""
        rows.append(f"{i}\t{pid}\t{FOLD_NAMES[folds.fold[i]]}")
    with open(os.path.join(out_dir, "folds.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def run_task(
    config: PipelineConfig,
    task: str,
    cohort: CohortTable,
    folds: FoldAssignment,
    ledger_rows: list,
) -> TaskOutcome:
    """Search, select, evaluate and explain one prediction task."""
    parts = _fold_arrays(cohort, folds)
    train_cohort, _ = parts["train"]
    state = preprocess.fit(train_cohort, n_chained_iterations=config.n_chained_iterations)
    fm = {name: preprocess.apply(state, parts[name][0]) for name in FOLD_NAMES}
    y = {name: cohort.labels[task][parts[name][1]] for name in FOLD_NAMES}
    data = TaskData(fm["train"].values, y["train"], fm["validation"].values, y["validation"])

    best_candidates = {}
    for family in config.families:
        spec = SearchSpec(
            family=family,
            task=task,
            n_runs=config.n_runs,
            seed=derive_seed(config.seed, "search", task, family),
        )
        records = run_search(spec, data, workers=config.workers)
        for record in records:
            ledger_rows.append(
                [
                    family,
                    task,
                    record.run_index,
                    json.dumps(record.hyperparams.values, sort_keys=True),
                    f"{record.validation_auc:.6f}",
                    f"{record.wall_time:.3f}",
                    int(record.failed),
                ]
            )
        best = select_best(records)
        best.artifact.preprocessor = state
        best_candidates[family] = best
        log.info("search done: %s/%s best val AUC %.4f", task, family, best.validation_auc)

    # final evaluation: the single test-fold read for model assessment
    index_sets = bootstrap_index_sets(
        y["test"], config.bootstrap_n, derive_seed(config.seed, "bootstrap", task)
    )
    eval_reports = {}
    thresholds = {}
    for family, candidate in best_candidates.items():
        val_scores = predict(candidate.artifact, fm["validation"])
        threshold = select_operating_threshold(ScoredSet(val_scores, y["validation"]))
        test_scores = predict(candidate.artifact, fm["test"])
        eval_reports[family] = evaluate_scores(
            ScoredSet(test_scores, y["test"]), threshold, index_sets
        )
        thresholds[family] = threshold

    # ties break toward the earlier family in config order (max keeps the first)
    headline_family = max(config.families, key=lambda fam: eval_reports[fam].point["auc"])
    for family in config.families:
        if family == headline_family:
            continue
        eval_reports[headline_family].significance[family] = {
            metric: pairwise_significance(
                eval_reports[headline_family].bootstrap_samples[metric],
                eval_reports[family].bootstrap_samples[metric],
                alpha=config.alpha,
            )
            for metric in METRIC_NAMES
        }
    selected_by_validation = max(
        config.families, key=lambda fam: best_candidates[fam].validation_auc
    )

    # importance: the second and final test-fold read
    headline_artifact = best_candidates[headline_family].artifact
    raw_importance = marginal_importance(
        headline_artifact,
        fm["test"],
        y["test"],
        model_label=f"{headline_family}/{task}",
    )
    grouped = grouped_importance(raw_importance, state)

    return TaskOutcome(
        task=task,
        preprocessor=state,
        best_candidates=best_candidates,
        eval_reports=eval_reports,
        thresholds=thresholds,
        headline_family=headline_family,
        selected_by_validation=selected_by_validation,
        importance_grouped=grouped,
        importance_raw=raw_importance,
    )


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Run every stage; failures leave a stage-tagged marker in out_dir."""
    started = time.time()
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "artifacts"), exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "reports"), exist_ok=True)
    try:
        return _run_pipeline_stages(config, started)
    except Exception as exc:
        stage = getattr(exc, "pipeline_stage", "unknown")
        write_json(
            {"failed": True, "stage": stage, "error": str(exc)},
            os.path.join(config.out_dir, "FAILED.json"),
        )
        raise


class _Stage:
    """Tags exceptions with the stage they escaped from."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "pipeline_stage"):
            exc.pipeline_stage = self.name
            exc.args = (f"[stage {self.name}] {exc}",) + exc.args[1:]
        return False


def _run_pipeline_stages(config: PipelineConfig, started: float) -> RunManifest:
    with _Stage("load"):
        schema = SchemaConfig.from_file(config.schema) if config.schema else SchemaConfig()
        cohort = load_cohort(config.cohort, schema)
        cohort_hash = _sha256_file(config.cohort)
    with _Stage("split"):
        folds = stratified_split(
            cohort, (0.5, 0.2, 0.3), seed=derive_seed(config.seed, "split")
        )
        _write_folds(config.out_dir, cohort, folds)

    ledger_rows: list = []
    outcomes: dict[str, TaskOutcome] = {}
    fold_sizes: dict[str, dict] = {}
    for task in config.tasks:
        with _Stage(f"task:{task}"):
            if task == "sars_cov_2":
                task_cohort, task_folds = cohort, folds
            else:
                task_cohort, task_folds = subcohort_positive(cohort, folds)
            fold_sizes[task] = {
                name: int(task_folds.indices(name).size) for name in FOLD_NAMES
            }
            outcome = run_task(config, task, task_cohort, task_folds, ledger_rows)
            outcomes[task] = outcome

    write_tsv(
        [["family", "task", "run_index", "hyperparams", "validation_auc", "wall_time_s", "failed"]]
        + ledger_rows,
        os.path.join(config.out_dir, "search_ledger.tsv"),
    )

    manifest_tasks: dict = {}
    for task, outcome in outcomes.items():
        preprocess_path = f"preprocessor_{task}.json"
        write_json(
            outcome.preprocessor.to_jsonable(),
            os.path.join(config.out_dir, preprocess_path),
        )
        families_entry = {}
        for family, candidate in outcome.best_candidates.items():
            artifact_rel = os.path.join("artifacts", f"{task}_{family}.json")
            artifact_path = os.path.join(config.out_dir, artifact_rel)
            artifact = candidate.artifact
            save_artifact(artifact, artifact_path)
            outcome.artifact_paths[family] = artifact_rel
            report = outcome.eval_reports[family]
            families_entry[family] = {
                "run_index": candidate.run_index,
                "hyperparams": candidate.hyperparams.values,
                "validation_auc": candidate.validation_auc,
                "operating_threshold": outcome.thresholds[family],
                "artifact_path": artifact_rel,
                "artifact_sha256": _sha256_file(artifact_path),
                "test_metrics": report.point,
                "test_ci_low": report.ci_low,
                "test_ci_high": report.ci_high,
            }
        manifest_tasks[task] = {
            "fold_sizes": fold_sizes[task],
            "preprocessor_path": preprocess_path,
            "families": families_entry,
            "headline_family": outcome.headline_family,
            "selected_by_validation": outcome.selected_by_validation,
            "test_fold_reads": {"evaluate": len(outcome.best_candidates), "explain": 1},
        }

    # workers and out_dir are execution resources, not experiment inputs;
    # the content hash must be a pure function of (cohort bytes, config)
    payload = {
        "format_version": 1,
        "kind": "run_manifest",
        "config": {
            k: v
            for k, v in config.to_jsonable().items()
            if k not in ("out_dir", "workers")
        },
        "workers": config.workers,
        "out_dir": config.out_dir,
        "cohort_sha256": cohort_hash,
        "fold_sizes_full": {name: int(folds.indices(name).size) for name in FOLD_NAMES},
        "tasks": manifest_tasks,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "wall_time_s": round(time.time() - started, 3),
    }
    hashable = {k: v for k, v in payload.items() if k not in _VOLATILE_MANIFEST_KEYS}
    payload["content_hash"] = _sha256_jsonable(hashable)
    manifest = RunManifest(payload)
    with _Stage("report"):
        emit_report(manifest, outcomes)
        write_json(payload, os.path.join(config.out_dir, MANIFEST_NAME))
    failed_marker = os.path.join(config.out_dir, "FAILED.json")
    if os.path.exists(failed_marker):
        os.unlink(failed_marker)
    return manifest


def emit_report(manifest: RunManifest, outcomes: dict[str, TaskOutcome]):
    """Write per-task metric tables, curve points and importance tables."""
    out_dir = manifest.payload["out_dir"]
    reports_dir = os.path.join(out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    for task, outcome in outcomes.items():
        headline = outcome.headline_family
        per_family = {}
        for family, report in outcome.eval_reports.items():
            significance = {}
            if family != headline:
                sig = outcome.eval_reports[headline].significance.get(family, {})
                significance = {m: r.significant for m, r in sig.items()}
            per_family[family] = {
                "point": report.point,
                "ci_low": report.ci_low,
                "ci_high": report.ci_high,
                "significance": significance,
            }
            write_tsv(
                curve_rows(report.roc, "roc"),
                os.path.join(reports_dir, f"{task}_{family}_roc.tsv"),
            )
            write_tsv(
                curve_rows(report.pr, "pr"),
                os.path.join(reports_dir, f"{task}_{family}_pr.tsv"),
            )
            write_json(
                report.to_jsonable(),
                os.path.join(reports_dir, f"{task}_{family}_eval.json"),
            )
        write_tsv(
            metrics_table_rows(per_family, headline),
            os.path.join(reports_dir, f"{task}_metrics.tsv"),
        )
        write_tsv(
            importance_rows(outcome.importance_grouped),
            os.path.join(reports_dir, f"{task}_importance.tsv"),
        )
        write_json(
            {
                "grouped": outcome.importance_grouped.to_jsonable(),
                "per_column": outcome.importance_raw.to_jsonable(),
            },
            os.path.join(reports_dir, f"{task}_importance.json"),
        )


# ---------------------------------------------------------------------------
# single-record scoring (shared by the CLI and the scoring service)
# ---------------------------------------------------------------------------


def build_record_table(state: PreprocessorState, feature_map: dict) -> CohortTable:
    """One-row cohort table from a raw feature map; absent keys are missing.

    Keys must name kept source features (dropped columns are accepted and
    ignored); values type-check against the fitted column kinds, with JSON
    null meaning missing.
    """
    known = set(state.source_kinds) | set(state.dropped)
    for key in feature_map:
        if key not in known:
            raise ValidationError(f"unknown feature {key!r}", key=key)
    columns = []
    for name, kind in state.source_kinds.items():
        value = feature_map.get(name)
        if kind == "discrete":
            cats = state.discrete_categories[name]
            text_kind = any(isinstance(c, str) for c in cats)
        else:
            text_kind = False
        if value is None:
            if text_kind:
                columns.append(
                    RawColumn(name, "categorical-text",
                              np.array([None], dtype=object), np.array([True]))
                )
            else:
                columns.append(
                    RawColumn(name, "numeric", np.array([np.nan]), np.array([True]))
                )
            continue
        if text_kind:
            if not isinstance(value, str):
                raise ValidationError(
                    f"feature {name!r} expects a category string", key=name
                )
            columns.append(
                RawColumn(name, "categorical-text",
                          np.array([value], dtype=object), np.array([False]))
            )
        else:
            try:
                numeric = float(value)
            except (TypeError, ValueError):
                raise ValidationError(f"feature {name!r} expects a number", key=name)
            if not np.isfinite(numeric):
                raise ValidationError(f"feature {name!r} must be finite", key=name)
            columns.append(
                RawColumn(name, "numeric", np.array([numeric]), np.array([False]))
            )
    zeros = np.zeros(1, dtype=np.int64)
    return CohortTable(columns=columns, labels={"sars_cov_2": zeros, "admission": zeros,
                                                "icu": zeros}, age_quantile=zeros.copy())


@dataclass
class RecordScore:
    probability: float
    deltas: list  # (source feature, signed normalized delta), sorted by |delta|
    degenerate: bool
    all_missing: bool


def score_record(artifact: ModelArtifact, feature_map: dict, top_k: int = 10) -> RecordScore:
    """Score one raw record and report per-feature what-if deltas.

    Each kept source feature is blanked in turn (one-hot groups collapse to
    the missing category, continuous values flow through imputation with
    their indicator raised) and the signed prediction change base - masked
    is normalized so absolute values sum to 1. A positive delta means the
    feature's present value pushes the score up.
    """
    state = artifact.preprocessor
    if state is None:
        raise PipelineError("artifact carries no preprocessor; cannot score raw records")
    record = build_record_table(state, feature_map)
    fm = preprocess.apply(state, record)
    base = float(predict(artifact, fm)[0])

    provided = [k for k in feature_map if k in state.source_kinds and feature_map[k] is not None]
    deltas = []
    for name in state.source_kinds:
        masked_map = dict(feature_map)
        masked_map[name] = None
        masked_fm = preprocess.apply(state, build_record_table(state, masked_map))
        masked = float(predict(artifact, masked_fm)[0])
        deltas.append((name, base - masked))
    total = sum(abs(d) for _, d in deltas)
    degenerate = total <= 0.0
    if degenerate:
        normalized = [(name, 0.0) for name, _ in deltas]
    else:
        normalized = [(name, d / total) for name, d in deltas]
    normalized.sort(key=lambda item: (-abs(item[1]), item[0]))
    return RecordScore(
        probability=base,
        deltas=normalized[:top_k] if top_k else normalized,
        degenerate=degenerate,
        all_missing=len(provided) == 0,
    )


def load_headline_artifacts(out_dir) -> dict[str, tuple[ModelArtifact, float]]:
    """Headline artifact and operating threshold per task, from a manifest."""
    manifest = RunManifest.load(out_dir)
    loaded = {}
    for task, entry in manifest.payload["tasks"].items():
        family = entry["headline_family"]
        info = entry["families"][family]
        path = os.path.join(out_dir, info["artifact_path"])
        artifact = load_artifact(path)
        loaded[task] = (artifact, float(info["operating_threshold"]))
    return loaded
