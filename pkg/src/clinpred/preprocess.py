"""Train-fold preprocessing: drop, one-hot, standardize, impute, indicate.

The whole chain is fitted on the training fold only and applied unchanged
to every fold:

1. drop features missing for more than 99.8% of training patients;
2. one-hot encode discrete features (fewer than 6 distinct training
   values, or any text feature) with an extra category for missing;
3. standardize continuous features to zero mean / unit standard deviation
   using training-fold statistics (population variance);
4. impute missing continuous entries by deterministic chained equations:
   start at the column mean, then repeatedly regress each column on the
   others (ridge-regularized, fitted on observed training rows) and
   refresh the imputed entries;
5. append one 0/1 indicator per continuous feature marking entries that
   were imputed rather than observed.

The chain runs in standardized space, so the mean-initialisation is a
zero fill. Fitting is seed-free and deterministic; applying never alters
observed values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CohortTable
from .errors import PipelineError, SchemaMismatchError

DROP_MISSING_FRACTION = 0.998
DISCRETE_UNIQUE_LIMIT = 6
STD_FLOOR = 1e-12
RIDGE_LAMBDA = 1e-3
MISSING_CATEGORY = "(missing)"


@dataclass
class FeatureMatrix:
    """Dense post-preprocessing design matrix.

    ``missing_mask`` has one column per continuous feature and mirrors the
    trailing indicator columns of ``values``.
    """

    values: np.ndarray
    names: list[str]
    missing_mask: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass
class PreprocessorState:
    """Everything fitted on the training fold, serializable as JSON."""

    dropped: list[str]
    discrete_categories: dict[str, list]  # observed categories, missing excluded
    continuous: list[str]
    cont_means: dict[str, float]
    cont_stds: dict[str, float]
    inert: list[str]  # continuous columns with (near) zero training std
    impute_order: list[str]
    impute_intercepts: dict[str, float]
    impute_coefs: dict[str, list[float]]  # aligned to the other continuous columns
    n_chained_iterations: int
    source_kinds: dict[str, str]  # every kept source column -> kind
    feature_layout: list[str]
    layout_spec: list[dict]  # {"source", "type": onehot|value|indicator, "category"?}

    def to_jsonable(self) -> dict:
        return {
            "format_version": 1,
            "kind": "preprocessor_state",
            "dropped": self.dropped,
            "discrete_categories": self.discrete_categories,
            "continuous": self.continuous,
            "cont_means": self.cont_means,
            "cont_stds": self.cont_stds,
            "inert": self.inert,
            "impute_order": self.impute_order,
            "impute_intercepts": self.impute_intercepts,
            "impute_coefs": self.impute_coefs,
            "n_chained_iterations": self.n_chained_iterations,
            "source_kinds": self.source_kinds,
            "feature_layout": self.feature_layout,
            "layout_spec": self.layout_spec,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "PreprocessorState":
        if payload.get("kind") != "preprocessor_state":
            raise PipelineError("not a serialized preprocessor state")
        if payload.get("format_version") != 1:
            raise PipelineError(
                f"unsupported preprocessor format version {payload.get('format_version')!r}"
            )
        fields = {k: v for k, v in payload.items() if k not in ("format_version", "kind")}
        return cls(**fields)


def fit_drop_rule(train: CohortTable) -> set[str]:
    """Columns whose training-fold missing fraction exceeds the cutoff."""
    if train.n == 0:
        raise PipelineError("training fold is empty")
    dropped = set()
    for col in train.columns:
        if float(col.missing.mean()) > DROP_MISSING_FRACTION:
            dropped.add(col.name)
    return dropped


def classify_feature_kinds(
    train: CohortTable, exclude: set[str] | None = None
) -> tuple[set[str], set[str]]:
    """Split kept columns into discrete and continuous sets.

    A numeric column is discrete when its distinct observed training
    values number fewer than 6; text columns are discrete regardless.
    """
    exclude = exclude or set()
    discrete, continuous = set(), set()
    for col in train.columns:
        if col.name in exclude:
            continue
        if col.kind == "categorical-text":
            discrete.add(col.name)
            continue
        observed = col.values[~col.missing]
        if np.unique(observed).size < DISCRETE_UNIQUE_LIMIT:
            discrete.add(col.name)
        else:
            continuous.add(col.name)
    return discrete, continuous


def _observed_categories(col) -> list:
    if col.kind == "categorical-text":
        observed = sorted({str(v) for v, m in zip(col.values, col.missing) if not m})
        return observed
    observed = np.unique(col.values[~col.missing])
    return [float(v) for v in observed]


def _category_label(value) -> str:
    return str(value)


def _ridge_fit(design: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Least squares with a small ridge on the non-intercept coefficients."""
    n, k = design.shape
    a = np.empty((n, k + 1), dtype=np.float64)
    a[:, 0] = 1.0
    a[:, 1:] = design
    gram = a.T @ a
    penalty = np.full(k + 1, RIDGE_LAMBDA)
    penalty[0] = 0.0
    gram[np.diag_indices_from(gram)] += penalty
    beta = np.linalg.solve(gram, a.T @ target)
    return float(beta[0]), beta[1:]


def fit(train: CohortTable, n_chained_iterations: int = 10) -> PreprocessorState:
    """Fit the full preprocessing chain on a training fold."""
    if train.n == 0:
        raise PipelineError("training fold is empty")
    if n_chained_iterations < 1:
        raise PipelineError("n_chained_iterations must be positive")

    dropped = fit_drop_rule(train)
    discrete, continuous_set = classify_feature_kinds(train, exclude=dropped)
    kept = [c for c in train.columns if c.name not in dropped]
    continuous = [c.name for c in kept if c.name in continuous_set]

    discrete_categories = {}
    source_kinds = {}
    for col in kept:
        source_kinds[col.name] = "discrete" if col.name in discrete else "continuous"
        if col.name in discrete:
            discrete_categories[col.name] = _observed_categories(col)

    cont_means, cont_stds, inert = {}, {}, []
    z = np.zeros((train.n, len(continuous)), dtype=np.float64)
    mask = np.zeros((train.n, len(continuous)), dtype=bool)
    for j, name in enumerate(continuous):
        col = train.column(name)
        observed = col.values[~col.missing]
        if observed.size == 0:
            raise PipelineError(
                f"column {name!r} has no observed training values; "
                "the drop rule should have removed it"
            )
        mean = float(observed.mean())
        std = float(np.sqrt(np.mean((observed - mean) ** 2)))
        cont_means[name] = mean
        cont_stds[name] = std
        mask[:, j] = col.missing
        if std < STD_FLOOR:
            inert.append(name)
            continue
        z[~col.missing, j] = (observed - mean) / std
        # missing entries start at the (standardized) column mean: zero

    observed_counts = {name: int((~mask[:, j]).sum()) for j, name in enumerate(continuous)}
    impute_order = sorted(
        continuous, key=lambda name: (-observed_counts[name], continuous.index(name))
    )
    col_index = {name: j for j, name in enumerate(continuous)}
    inert_set = set(inert)

    intercepts: dict[str, float] = {name: 0.0 for name in continuous}
    coefs: dict[str, np.ndarray] = {
        name: np.zeros(len(continuous) - 1) for name in continuous
    }
    if len(continuous) >= 2:
        for _ in range(n_chained_iterations):
            for name in impute_order:
                j = col_index[name]
                if name in inert_set:
                    continue
                others = [k for k in range(len(continuous)) if k != j]
                obs_rows = ~mask[:, j]
                intercept, coef = _ridge_fit(z[obs_rows][:, others], z[obs_rows, j])
                intercepts[name] = intercept
                coefs[name] = coef
                miss_rows = mask[:, j]
                if miss_rows.any():
                    z[miss_rows, j] = _chain_predict(z, miss_rows, others, intercept, coef)

    layout_spec: list[dict] = []
    for col in kept:
        if col.name in discrete:
            for cat in discrete_categories[col.name]:
                layout_spec.append(
                    {"source": col.name, "type": "onehot", "category": cat}
                )
            layout_spec.append(
                {"source": col.name, "type": "onehot", "category": MISSING_CATEGORY}
            )
        else:
            layout_spec.append({"source": col.name, "type": "value"})
    for name in continuous:
        layout_spec.append({"source": name, "type": "indicator"})

    feature_layout = []
    for spec in layout_spec:
        if spec["type"] == "onehot":
            feature_layout.append(f"{spec['source']}={_category_label(spec['category'])}")
        elif spec["type"] == "value":
            feature_layout.append(spec["source"])
        else:
            feature_layout.append(f"{spec['source']} MISSING")
    if len(set(feature_layout)) != len(feature_layout):
        raise PipelineError("output feature names are not unique")

    return PreprocessorState(
        dropped=sorted(dropped),
        discrete_categories=discrete_categories,
        continuous=continuous,
        cont_means=cont_means,
        cont_stds=cont_stds,
        inert=inert,
        impute_order=impute_order,
        impute_intercepts=intercepts,
        impute_coefs={k: np.asarray(v).tolist() for k, v in coefs.items()},
        n_chained_iterations=n_chained_iterations,
        source_kinds=source_kinds,
        feature_layout=feature_layout,
        layout_spec=layout_spec,
    )


def _chain_predict(z, rows, others, intercept, coef):
    """Regression prediction with a fixed term order.

    Accumulating over coefficients keeps each row's arithmetic independent
    of which other rows are in the batch, so a single applied record is
    bit-identical to the same record inside a full fold.
    """
    out = np.full(int(np.sum(rows)), intercept, dtype=np.float64)
    sub = z[rows]
    for idx, k in enumerate(others):
        out += coef[idx] * sub[:, k]
    return out


def apply(state: PreprocessorState, fold: CohortTable) -> FeatureMatrix:
    """Apply a fitted chain to any fold; never alters observed values."""
    fold_names = {c.name for c in fold.columns}
    expected = set(state.source_kinds) | set(state.dropped)
    unexpected = sorted(fold_names - expected)
    absent = sorted(set(state.source_kinds) - fold_names)
    if unexpected or absent:
        raise SchemaMismatchError(
            f"fold columns do not match fitted state "
            f"(unexpected: {unexpected}, missing: {absent})"
        )

    n = fold.n
    continuous = state.continuous
    col_index = {name: j for j, name in enumerate(continuous)}
    z = np.zeros((n, len(continuous)), dtype=np.float64)
    mask = np.zeros((n, len(continuous)), dtype=bool)
    inert_set = set(state.inert)
    for name in continuous:
        col = fold.column(name)
        j = col_index[name]
        mask[:, j] = col.missing
        if name in inert_set:
            continue
        observed = ~col.missing
        z[observed, j] = (
            col.values[observed] - state.cont_means[name]
        ) / state.cont_stds[name]

    if len(continuous) >= 2:
        others_for = {
            name: [k for k in range(len(continuous)) if k != col_index[name]]
            for name in continuous
        }
        coefs_for = {
            name: np.asarray(state.impute_coefs[name], dtype=np.float64)
            for name in continuous
        }
        for _ in range(state.n_chained_iterations):
            for name in state.impute_order:
                if name in inert_set:
                    continue
                j = col_index[name]
                miss_rows = mask[:, j]
                if miss_rows.any():
                    z[miss_rows, j] = _chain_predict(
                        z,
                        miss_rows,
                        others_for[name],
                        state.impute_intercepts[name],
                        coefs_for[name],
                    )

    width = len(state.feature_layout)
    values = np.zeros((n, width), dtype=np.float64)
    out_col = 0
    for spec in state.layout_spec:
        if spec["type"] == "onehot":
            source = spec["source"]
            category = spec["category"]
            col = fold.column(source)
            if category == MISSING_CATEGORY:
                hits = _category_hits(col, state.discrete_categories[source])
                values[:, out_col] = (~hits).astype(np.float64)
            else:
                values[:, out_col] = _matches_category(col, category)
        elif spec["type"] == "value":
            values[:, out_col] = z[:, col_index[spec["source"]]]
        else:  # indicator
            values[:, out_col] = mask[:, col_index[spec["source"]]].astype(np.float64)
        out_col += 1

    if not np.all(np.isfinite(values)):
        raise PipelineError("preprocessing produced non-finite values")
    return FeatureMatrix(values=values, names=list(state.feature_layout), missing_mask=mask)


def _matches_category(col, category) -> np.ndarray:
    if col.kind == "categorical-text":
        out = np.zeros(col.values.shape[0], dtype=np.float64)
        if isinstance(category, str):
            for i, (v, m) in enumerate(zip(col.values, col.missing)):
                if not m and str(v) == category:
                    out[i] = 1.0
        return out
    if isinstance(category, str):
        return np.zeros(col.values.shape[0], dtype=np.float64)
    hits = (~col.missing) & (col.values == float(category))
    return hits.astype(np.float64)


def _category_hits(col, categories) -> np.ndarray:
    """True where the value matches any observed training category."""
    hits = np.zeros(col.values.shape[0], dtype=bool)
    for cat in categories:
        hits |= _matches_category(col, cat).astype(bool)
    return hits
