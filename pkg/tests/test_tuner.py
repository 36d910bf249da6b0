import numpy as np
import pytest

from clinpred.errors import PipelineError
from clinpred.models import HYPERPARAMETER_SPACE
from clinpred.tuner import (
    CandidateRecord,
    SearchSpec,
    TaskData,
    run_search,
    sample_hyperparams,
    select_best,
)


def separable_data(n=80, d=4, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n).astype(np.float64)
    x = rng.normal(size=(n, d))
    x[:, 0] = y * 2.0 - 1.0 + rng.normal(scale=0.05, size=n)
    return x, y


class TestSampling:
    def test_discrete_choices_only_from_table(self):
        space = HYPERPARAMETER_SPACE["xgb"]
        seen = {name: set() for name in space}
        for i in range(300):
            hp = sample_hyperparams("xgb", i)
            for name, value in hp.values.items():
                seen[name].add(value)
        for name, spec in space.items():
            if spec[0] == "choice":
                assert seen[name] <= set(spec[1])
                assert len(seen[name]) == len(spec[1])  # all choices reachable

    def test_continuous_dropout_in_interval(self):
        draws = [sample_hyperparams("nn", i).values["dropout"] for i in range(500)]
        assert all(0.0 <= v <= 0.25 for v in draws)
        assert 0.10 <= float(np.mean(draws)) <= 0.15

    def test_same_seed_same_draw(self):
        assert sample_hyperparams("svm", 7).values == sample_hyperparams("svm", 7).values
        assert sample_hyperparams("svm", 7).values != sample_hyperparams("svm", 8).values


class TestRunSearch:
    def make_task_data(self, seed=0):
        x, y = separable_data(seed=seed)
        xv, yv = separable_data(n=50, seed=seed + 1)
        return TaskData(x, y, xv, yv)

    def test_single_run(self):
        spec = SearchSpec(family="lr", task="sars_cov_2", n_runs=1, seed=0)
        records = run_search(spec, self.make_task_data())
        assert len(records) == 1
        assert select_best(records) is records[0]

    def test_determinism(self):
        spec = SearchSpec(family="lr", task="sars_cov_2", n_runs=5, seed=3)
        a = run_search(spec, self.make_task_data())
        b = run_search(spec, self.make_task_data())
        assert [r.hyperparams.values for r in a] == [r.hyperparams.values for r in b]
        assert [r.validation_auc for r in a] == [r.validation_auc for r in b]

    def test_workers_do_not_change_results(self):
        spec = SearchSpec(family="lr", task="sars_cov_2", n_runs=6, seed=5)
        serial = run_search(spec, self.make_task_data(), workers=1)
        parallel = run_search(spec, self.make_task_data(), workers=3)
        assert [r.validation_auc for r in serial] == [r.validation_auc for r in parallel]
        assert [r.hyperparams.values for r in serial] == [
            r.hyperparams.values for r in parallel
        ]

    def test_separable_fixture_reaches_perfect_auc(self):
        spec = SearchSpec(family="lr", task="sars_cov_2", n_runs=30, seed=1)
        records = run_search(spec, self.make_task_data())
        assert select_best(records).validation_auc == 1.0

    def test_diverged_runs_recorded_not_raised(self, caplog):
        x = np.full((20, 3), np.nan)
        y = np.arange(20) % 2.0
        data = TaskData(x, y, x.copy(), y.copy())
        spec = SearchSpec(family="lr", task="sars_cov_2", n_runs=3, seed=0)
        with np.errstate(all="ignore"), caplog.at_level("WARNING", "clinpred.tuner"):
            records = run_search(spec, data)
        assert all(r.failed for r in records)
        assert all(r.validation_auc == 0.0 for r in records)
        assert any("3 of 3 runs failed" in message for message in caplog.messages)
        with pytest.raises(PipelineError, match="all candidates failed"):
            select_best(records)

    def test_run_seeds_are_seed_plus_index(self):
        spec = SearchSpec(family="lr", task="icu", n_runs=3, seed=10)
        records = run_search(spec, self.make_task_data())
        assert [r.artifact.train_seed for r in records] == [10, 11, 12]


class TestSelectBest:
    def make(self, aucs):
        return [
            CandidateRecord(
                run_index=i,
                hyperparams=sample_hyperparams("lr", i),
                validation_auc=a,
                artifact=None,
            )
            for i, a in enumerate(aucs)
        ]

    def test_tie_breaks_to_lower_run_index(self):
        best = select_best(self.make([0.6, 0.9, 0.9]))
        assert best.run_index == 1

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            aucs = list(np.round(rng.random(10), 2))
            best = select_best(self.make(aucs))
            # oracle: first index achieving the max
            expected = max(range(len(aucs)), key=lambda i: (aucs[i], -i))
            assert best.run_index == expected

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        aucs = list(rng.random(10))
        base = select_best(self.make(aucs)).run_index
        transformed = select_best(self.make([np.tanh(3 * a) for a in aucs])).run_index
        assert base == transformed

    def test_empty_errors(self):
        with pytest.raises(PipelineError):
            select_best([])
