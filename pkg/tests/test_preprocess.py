import json

import numpy as np
import pytest

from clinpred.data import CohortTable, RawColumn
from clinpred.errors import SchemaMismatchError
from clinpred.preprocess import (
    MISSING_CATEGORY,
    PreprocessorState,
    apply,
    classify_feature_kinds,
    fit,
    fit_drop_rule,
)


def build_cohort(columns: dict, n: int | None = None) -> CohortTable:
    """columns: name -> list of values with None for missing (str values => text)."""
    raw_cols = []
    for name, values in columns.items():
        if n is None:
            n = len(values)
        missing = np.array([v is None for v in values], dtype=bool)
        has_text = any(isinstance(v, str) for v in values if v is not None)
        if has_text:
            arr = np.array([None if v is None else str(v) for v in values], dtype=object)
            raw_cols.append(RawColumn(name, "categorical-text", arr, missing))
        else:
            arr = np.array([np.nan if v is None else float(v) for v in values])
            raw_cols.append(RawColumn(name, "numeric", arr, missing))
    zeros = np.zeros(n, dtype=np.int64)
    return CohortTable(
        columns=raw_cols,
        labels={"sars_cov_2": zeros, "admission": zeros, "icu": zeros},
        age_quantile=zeros.copy(),
    )


class TestDropRule:
    def test_threshold_behaviour(self):
        n = 2822
        nearly_all_missing = [None] * n
        for i in range(5):
            nearly_all_missing[i] = 1.0 + i  # observed for 5 patients: 99.82% missing
        kept_just_below = [None] * 1000
        for i in range(3):
            kept_just_below[i * 300] = float(i)  # 99.7% missing
        cohort_a = build_cohort({"ultra": nearly_all_missing})
        assert fit_drop_rule(cohort_a) == {"ultra"}
        cohort_b = build_cohort({"border": kept_just_below})
        assert fit_drop_rule(cohort_b) == set()

    def test_fully_observed_kept(self):
        cohort = build_cohort({"full": [1.0, 2.0, 3.0]})
        assert fit_drop_rule(cohort) == set()

    def test_fully_missing_dropped(self):
        cohort = build_cohort({"void": [None, None, None]})
        assert fit_drop_rule(cohort) == {"void"}


class TestClassifyKinds:
    def test_binary_numeric_is_discrete(self):
        cohort = build_cohort({"flag": [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]})
        discrete, continuous = classify_feature_kinds(cohort)
        assert discrete == {"flag"} and continuous == set()

    def test_six_distinct_values_is_continuous(self):
        cohort = build_cohort({"six": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]})
        discrete, continuous = classify_feature_kinds(cohort)
        assert continuous == {"six"} and discrete == set()

    def test_five_distinct_values_is_discrete(self):
        cohort = build_cohort({"five": [1.0, 2.0, 3.0, 4.0, 5.0, 5.0]})
        discrete, _ = classify_feature_kinds(cohort)
        assert discrete == {"five"}

    def test_text_column_always_discrete(self):
        values = [f"color{i}" for i in range(9)] * 2
        cohort = build_cohort({"urine": values})
        discrete, _ = classify_feature_kinds(cohort)
        assert discrete == {"urine"}
        state = fit(cohort)
        onehot = [s for s in state.layout_spec if s["source"] == "urine"]
        assert len(onehot) == 10  # 9 observed categories + missing


class TestFit:
    def test_constant_column_one_hot_encodes(self):
        # a truly constant column has one unique value, hence is discrete
        cohort = build_cohort({"const": [5.0] * 8})
        state = fit(cohort)
        assert state.source_kinds["const"] == "discrete"
        fm = apply(state, cohort)
        assert np.all(fm.values[:, fm.names.index("const=5.0")] == 1.0)

    def test_near_constant_continuous_column_is_inert(self):
        # six distinct values within float spacing of 5.0: std below the floor
        values = [5.0 + k * 1e-15 for k in range(6)] + [5.0, 5.0]
        cohort = build_cohort({"const": values})
        state = fit(cohort)
        assert state.cont_means["const"] == pytest.approx(5.0, abs=1e-9)
        assert state.cont_stds["const"] < 1e-12
        assert "const" in state.inert
        fm = apply(state, cohort)
        j = fm.names.index("const")
        assert np.all(fm.values[:, j] == 0.0)

    def test_hand_computed_standardization(self):
        cohort = build_cohort(
            {
                "a": [1.0, 2.0, 3.0, 1.5, 2.5, 0.5, 3.5],
                "b": [1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 2.0],
            }
        )
        # isolate: just column with values {1,2,3}; needs >=6 uniques to stay
        cohort2 = build_cohort({"v": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]})
        state = fit(cohort2)
        fm = apply(state, cohort2)
        j = fm.names.index("v")
        mean = np.mean([1, 2, 3, 4, 5, 6, 7])
        std = np.sqrt(np.mean((np.arange(1.0, 8.0) - mean) ** 2))
        assert fm.values[:, j] == pytest.approx(
            (np.arange(1.0, 8.0) - mean) / std, abs=1e-12
        )

    def test_population_std_on_three_values(self):
        values = np.array([1.0, 2.0, 3.0])
        mean = values.mean()
        std = np.sqrt(np.mean((values - mean) ** 2))
        standardized = (values - mean) / std
        assert standardized == pytest.approx([-1.2247, 0.0, 1.2247], abs=1e-4)

    def test_linear_relation_imputed_exactly(self):
        rng = np.random.default_rng(0)
        n = 2000
        x = rng.random(n) * 4.0
        y = 2.0 * x
        y_vals = list(y)
        missing_row = 137
        y_vals[missing_row] = None
        cohort = build_cohort({"x": list(x), "y": y_vals})
        state = fit(cohort, n_chained_iterations=10)
        fm = apply(state, cohort)
        j = fm.names.index("y")
        imputed_std = fm.values[missing_row, j]
        imputed = imputed_std * state.cont_stds["y"] + state.cont_means["y"]
        assert imputed == pytest.approx(2.0 * x[missing_row], abs=1e-6)


class TestApply:
    def fixture(self):
        rng = np.random.default_rng(1)
        n = 60
        cont_a = [float(v) if rng.random() > 0.3 else None for v in rng.normal(3, 2, n)]
        cont_b = [float(v) if rng.random() > 0.4 else None for v in rng.normal(-1, 1, n)]
        cat = [
            rng.choice(["low", "mid", "high"]) if rng.random() > 0.2 else None
            for _ in range(n)
        ]
        flag = [float(rng.integers(0, 2)) if rng.random() > 0.1 else None for _ in range(n)]
        return build_cohort({"cont_a": cont_a, "cont_b": cont_b, "cat": cat, "flag": flag})

    def test_observed_values_standardized_exactly(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        for name in state.continuous:
            col = cohort.column(name)
            j = fm.names.index(name)
            observed = ~col.missing
            expected = (col.values[observed] - state.cont_means[name]) / state.cont_stds[name]
            assert np.array_equal(fm.values[observed, j], expected)

    def test_training_observed_mean_zero_std_one(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        for name in state.continuous:
            if name in state.inert:
                continue
            col = cohort.column(name)
            j = fm.names.index(name)
            observed = fm.values[~col.missing, j]
            assert abs(observed.mean()) < 1e-9
            assert abs(np.sqrt(np.mean((observed - observed.mean()) ** 2)) - 1.0) < 1e-9

    def test_one_hot_groups_sum_to_one(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        for source, cats in state.discrete_categories.items():
            cols = [
                i
                for i, s in enumerate(state.layout_spec)
                if s["source"] == source and s["type"] == "onehot"
            ]
            assert len(cols) == len(cats) + 1
            sums = fm.values[:, cols].sum(axis=1)
            assert np.all(sums == 1.0)

    def test_no_missing_or_nonfinite_output(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        assert np.all(np.isfinite(fm.values))

    def test_indicators_match_missingness(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        for name in state.continuous:
            col = cohort.column(name)
            j = fm.names.index(f"{name} MISSING")
            assert np.array_equal(fm.values[:, j], col.missing.astype(float))
        # a fully observed row has an all-zero indicator block
        full_rows = ~np.any(
            np.stack([cohort.column(n).missing for n in state.continuous]), axis=0
        )
        if full_rows.any():
            ind_cols = [
                i for i, s in enumerate(state.layout_spec) if s["type"] == "indicator"
            ]
            assert np.all(fm.values[np.nonzero(full_rows)[0][0], ind_cols] == 0.0)

    def test_unseen_category_maps_to_missing(self):
        train = build_cohort({"cat": ["a", "b", "a", "b", "a"], "v": [1.0, 2.0, 3.0, 4.0, 5.0]})
        state = fit(train)
        other = build_cohort({"cat": ["c", "a", None], "v": [1.0, None, 2.0]})
        fm = apply(state, other)
        missing_col = fm.names.index(f"cat={MISSING_CATEGORY}")
        a_col = fm.names.index("cat=a")
        assert fm.values[0, missing_col] == 1.0 and fm.values[0, a_col] == 0.0
        assert fm.values[1, a_col] == 1.0
        assert fm.values[2, missing_col] == 1.0

    def test_layout_identical_across_folds(self):
        cohort = self.fixture()
        state = fit(cohort)
        idx = np.arange(cohort.n)
        fm_a = apply(state, cohort.take(idx[:20]))
        fm_b = apply(state, cohort.take(idx[20:]))
        assert fm_a.names == fm_b.names == state.feature_layout

    def test_apply_deterministic_bit_exact(self):
        cohort = self.fixture()
        state = fit(cohort)
        a = apply(state, cohort)
        b = apply(state, cohort)
        assert np.array_equal(a.values, b.values)

    def test_single_row_matches_batch_bit_exact(self):
        cohort = self.fixture()
        state = fit(cohort)
        full = apply(state, cohort)
        for i in (0, 7, 31):
            single = apply(state, cohort.take(np.array([i])))
            assert np.array_equal(single.values[0], full.values[i])

    def test_schema_mismatch_errors(self):
        cohort = self.fixture()
        state = fit(cohort)
        extra = build_cohort({"cont_a": [1.0], "bogus": [2.0]})
        with pytest.raises(SchemaMismatchError, match="bogus"):
            apply(state, extra)

    def test_imputation_never_overwrites_observed(self):
        cohort = self.fixture()
        state = fit(cohort)
        fm = apply(state, cohort)
        for name in state.continuous:
            col = cohort.column(name)
            j = fm.names.index(name)
            observed = ~col.missing
            expected = (col.values[observed] - state.cont_means[name]) / state.cont_stds[name]
            assert np.array_equal(fm.values[observed, j], expected)


class TestSerialization:
    def test_roundtrip_preserves_apply(self):
        cohort = TestApply().fixture()
        state = fit(cohort)
        payload = json.loads(json.dumps(state.to_jsonable()))
        restored = PreprocessorState.from_jsonable(payload)
        a = apply(state, cohort)
        b = apply(restored, cohort)
        assert np.array_equal(a.values, b.values)
        assert a.names == b.names
