import json
import os
import time

import numpy as np
import pytest

from clinpred.config import PipelineConfig, load_config
from clinpred.data import load_cohort, stratified_split, subcohort_positive
from clinpred.errors import ConfigurationError, ValidationError
from clinpred.metrics import METRIC_NAMES
from clinpred.preprocess import apply as apply_preprocessor
from clinpred.models import predict
from clinpred.report import parse_metric_cell, read_tsv
from clinpred.runner import (
    RunManifest,
    load_headline_artifacts,
    run_pipeline,
    score_record,
)
from clinpred.util import derive_seed


class TestConfig:
    def test_precedence_flag_over_env_over_file(self, tmp_path, smoke_cohort_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(f"cohort = {smoke_cohort_path}\nseed = 1\nn_runs = 3\nworkers = 2\n")
        env = {"CLINPRED_SEED": "2", "CLINPRED_N_RUNS": "4"}
        config = load_config(cfg_file, overrides={"seed": 5}, env=env)
        assert config.seed == 5  # flag wins
        assert config.n_runs == 4  # env beats file
        assert config.workers == 2  # file beats default

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("bogus = 1\n")
        with pytest.raises(ConfigurationError, match="bogus"):
            load_config(cfg_file)

    def test_validation_errors(self, smoke_cohort_path):
        with pytest.raises(ConfigurationError):
            PipelineConfig(cohort="/does/not/exist").validate()
        with pytest.raises(ConfigurationError):
            PipelineConfig(cohort=str(smoke_cohort_path), n_runs=0).validate()
        with pytest.raises(ConfigurationError):
            PipelineConfig(cohort=str(smoke_cohort_path), tasks=("bogus",)).validate()


class TestPipeline:
    def test_smoke_run_completes_with_all_reports(self, smoke_run):
        config, manifest = smoke_run
        tasks = manifest.payload["tasks"]
        assert set(tasks) == {"sars_cov_2", "admission", "icu"}
        evaluated = sum(len(entry["families"]) for entry in tasks.values())
        assert evaluated == 15  # 5 families x 3 tasks
        for task, entry in tasks.items():
            assert entry["headline_family"] in entry["families"]
            reports = os.path.join(config.out_dir, "reports")
            assert os.path.exists(os.path.join(reports, f"{task}_metrics.tsv"))
            assert os.path.exists(os.path.join(reports, f"{task}_importance.tsv"))
            for family in entry["families"]:
                assert os.path.exists(os.path.join(reports, f"{task}_{family}_roc.tsv"))
                assert os.path.exists(os.path.join(reports, f"{task}_{family}_pr.tsv"))
                artifact_path = os.path.join(config.out_dir, entry["families"][family
                    ]["artifact_path"])
                assert os.path.exists(artifact_path)
        assert os.path.exists(os.path.join(config.out_dir, "search_ledger.tsv"))
        assert os.path.exists(os.path.join(config.out_dir, "folds.tsv"))

    def test_smoke_run_fast(self, smoke_cohort_path, tmp_path):
        config = PipelineConfig(
            cohort=str(smoke_cohort_path), seed=3, n_runs=2,
            out_dir=str(tmp_path / "fastrun"), bootstrap_n=20,
        )
        started = time.time()
        run_pipeline(config)
        assert time.time() - started < 60.0

    def test_determinism_same_config_same_hash(self, smoke_cohort_path, tmp_path):
        base = dict(cohort=str(smoke_cohort_path), seed=11, n_runs=2, bootstrap_n=20)
        a = run_pipeline(PipelineConfig(out_dir=str(tmp_path / "a"), workers=1, **base))
        b = run_pipeline(PipelineConfig(out_dir=str(tmp_path / "b"), workers=2, **base))
        assert a.content_hash == b.content_hash
        c = run_pipeline(PipelineConfig(out_dir=str(tmp_path / "c"), seed=12,
                                        **{k: v for k, v in base.items() if k != "seed"}))
        assert c.content_hash != a.content_hash

    def test_test_fold_access_audit(self, smoke_run):
        _, manifest = smoke_run
        for entry in manifest.payload["tasks"].values():
            assert entry["test_fold_reads"] == {"evaluate": 5, "explain": 1}

    def test_search_ledger_structure(self, smoke_run):
        config, _ = smoke_run
        rows = read_tsv(os.path.join(config.out_dir, "search_ledger.tsv"))
        header, body = rows[0], rows[1:]
        assert header == [
            "family", "task", "run_index", "hyperparams",
            "validation_auc", "wall_time_s", "failed",
        ]
        assert len(body) == 5 * 3 * 2  # families x tasks x n_runs
        for row in body:
            json.loads(row[3])  # hyperparams round-trip
            assert 0.0 <= float(row[4]) <= 1.0

    def test_metric_table_cells_parse(self, smoke_run):
        config, manifest = smoke_run
        for task in manifest.payload["tasks"]:
            rows = read_tsv(os.path.join(config.out_dir, "reports", f"{task}_metrics.tsv"))
            header, body = rows[0], rows[1:]
            assert header[1] == "AUC"
            for row in body:
                for offset in range(len(METRIC_NAMES)):
                    point, low, high = parse_metric_cell(row[1 + 2 * offset])
                    assert low <= high
            # best row (first) never daggers itself
            assert all(cell == "" for cell in body[0][2::2])

    def test_manifest_loadable_and_hash_stable(self, smoke_run):
        config, manifest = smoke_run
        reloaded = RunManifest.load(config.out_dir)
        assert reloaded.content_hash == manifest.content_hash

    def test_stage_failure_writes_marker(self, tmp_path):
        # an all-negative cohort makes the first task's evaluation undefined
        from conftest import KAGGLE_HEADER
        import csv

        path = tmp_path / "allneg.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(KAGGLE_HEADER)
            for i in range(20):
                writer.writerow(
                    [f"p{i}", "9", "negative", "f", "f", "f",
                     f"{i * 0.1:.2f}", "1.0", "2.0", "red", "0.1", "0.2", "0.3"]
                )
        out_dir = tmp_path / "failing"
        config = PipelineConfig(
            cohort=str(path), seed=0, n_runs=1, out_dir=str(out_dir), bootstrap_n=10
        )
        with pytest.raises(Exception, match=r"\[stage task:sars_cov_2\]"):
            run_pipeline(config)
        marker = json.loads((out_dir / "FAILED.json").read_text())
        assert marker["failed"] and marker["stage"] == "task:sars_cov_2"


class TestScoreRecord:
    def test_known_row_matches_batch_prediction_bitwise(self, smoke_run, smoke_cohort_path):
        config, manifest = smoke_run
        cohort = load_cohort(smoke_cohort_path)
        folds = stratified_split(cohort, (0.5, 0.2, 0.3),
                                 seed=derive_seed(config.seed, "split"))
        artifacts = load_headline_artifacts(config.out_dir)
        for task, (artifact, _thr) in artifacts.items():
            if task == "sars_cov_2":
                task_cohort, task_folds = cohort, folds
            else:
                task_cohort, task_folds = subcohort_positive(cohort, folds)
            test_idx = task_folds.indices("test")
            fm = apply_preprocessor(artifact.preprocessor, task_cohort.take(test_idx))
            batch = predict(artifact, fm)
            row = int(test_idx[0])
            feature_map = {}
            for col in task_cohort.columns:
                if col.name not in artifact.preprocessor.source_kinds:
                    continue
                if col.missing[row]:
                    feature_map[col.name] = None
                elif col.kind == "numeric":
                    feature_map[col.name] = float(col.values[row])
                else:
                    feature_map[col.name] = str(col.values[row])
            result = score_record(artifact, feature_map, top_k=0)
            assert result.probability == batch[0]

    def test_all_missing_record_scores(self, smoke_run):
        config, _ = smoke_run
        artifacts = load_headline_artifacts(config.out_dir)
        artifact, _thr = artifacts["sars_cov_2"]
        result = score_record(artifact, {})
        assert 0.0 <= result.probability <= 1.0
        assert result.all_missing

    def test_unknown_feature_errors_with_key(self, smoke_run):
        config, _ = smoke_run
        artifact, _thr = load_headline_artifacts(config.out_dir)["sars_cov_2"]
        with pytest.raises(ValidationError) as excinfo:
            score_record(artifact, {"Bogus Lab": 1.0})
        assert excinfo.value.key == "Bogus Lab"

    def test_deltas_normalized_and_sorted(self, smoke_run):
        config, _ = smoke_run
        artifact, _thr = load_headline_artifacts(config.out_dir)["sars_cov_2"]
        result = score_record(artifact, {"Lab A": 2.0, "Lab B": -1.0}, top_k=0)
        total = sum(abs(d) for _, d in result.deltas)
        if not result.degenerate:
            assert total == pytest.approx(1.0, abs=1e-9)
        magnitudes = [abs(d) for _, d in result.deltas]
        assert magnitudes == sorted(magnitudes, reverse=True)

    def test_type_validation(self, smoke_run):
        config, _ = smoke_run
        artifact, _thr = load_headline_artifacts(config.out_dir)["sars_cov_2"]
        with pytest.raises(ValidationError):
            score_record(artifact, {"Lab A": "not-a-number"})
        with pytest.raises(ValidationError):
            score_record(artifact, {"Color test": 5.0})

    def test_masking_ignored_feature_gives_zero_delta(self, smoke_run):
        # craft a linear model that provably ignores one source feature;
        # the record leaves no other value missing, so blanking that
        # feature cannot leak through the imputation chain either
        import numpy as np

        from clinpred.models import Hyperparams, ModelArtifact
        from clinpred.models.logistic import LogisticState

        config, _ = smoke_run
        base_artifact, _thr = load_headline_artifacts(config.out_dir)["sars_cov_2"]
        state = base_artifact.preprocessor
        weights = np.zeros(len(state.feature_layout))
        ignored = "Lab C"
        for i, name in enumerate(state.feature_layout):
            if name.startswith("Lab") and not name.startswith(ignored):
                weights[i] = 0.8
        artifact = ModelArtifact(
            family="lr",
            hyperparams=Hyperparams("lr", {"c": 1.0}),
            state=LogisticState(weights, bias=-0.2),
            train_seed=0,
            task="sars_cov_2",
            preprocessor=state,
        )
        record = {}
        for name, kind in state.source_kinds.items():
            if kind == "discrete":
                record[name] = state.discrete_categories[name][0]
            else:
                record[name] = 0.4
        result = score_record(artifact, record, top_k=0)
        deltas = dict(result.deltas)
        assert deltas[ignored] == 0.0
