"""Cohort ingestion, label construction and stratified fold assignment.

The cohort file is delimited text with a header row, matching the public
Kaggle COVID-19 triage dataset layout (one row per patient, empty cells
for measurements that were never taken). A :class:`SchemaConfig` maps
column names to semantic roles; everything not claimed by a role is a
feature column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IngestionError, PipelineError
from .util import rng_for

TASKS = ("sars_cov_2", "admission", "icu")
FOLD_NAMES = ("train", "validation", "test")

_TRUTHY_TOKENS = {"1", "1.0", "t", "true", "yes", "y", "positive"}
_FALSY_TOKENS = {"0", "0.0", "f", "false", "no", "n", "negative", ""}

# Column names of the public Kaggle cohort file, used as schema defaults.
KAGGLE_ID = "Patient ID"
KAGGLE_AGE = "Patient age quantile"
KAGGLE_SARS = "SARS-Cov-2 exam result"
KAGGLE_WARD = "Patient addmited to regular ward (1=yes, 0=no)"
KAGGLE_SEMI = "Patient addmited to semi-intensive unit (1=yes, 0=no)"
KAGGLE_ICU = "Patient addmited to intensive care unit (1=yes, 0=no)"


@dataclass(frozen=True)
class SchemaConfig:
    """Maps cohort file columns to their semantic roles.

    ``label_admission`` and ``label_icu`` may name several columns; a
    patient is labelled 1 if any of them is truthy. All label columns,
    the id column and ``non_feature_columns`` are excluded from the
    feature set (the semi-intensive ward column is an outcome column even
    when it is not used as a label, so it is excluded by default).
    """

    label_sars_cov_2: str = KAGGLE_SARS
    label_admission: tuple[str, ...] = (KAGGLE_WARD,)
    label_icu: tuple[str, ...] = (KAGGLE_ICU,)
    age_column: str = KAGGLE_AGE
    positive_token: str = "positive"
    id_column: str | None = KAGGLE_ID
    non_feature_columns: tuple[str, ...] = (KAGGLE_SEMI,)
    numeric_columns: tuple[str, ...] = ()

    def role_columns(self) -> set[str]:
        cols = {self.label_sars_cov_2, self.age_column}
        cols.update(self.label_admission)
        cols.update(self.label_icu)
        cols.update(self.non_feature_columns)
        if self.id_column:
            cols.add(self.id_column)
        return cols

    @classmethod
    def from_file(cls, path) -> "SchemaConfig":
        """Parse a plain key=value schema file (keys match field names)."""
        values: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"bad schema line: {line!r}")
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                if key in ("label_admission", "label_icu", "non_feature_columns", "numeric_columns"):
                    values[key] = tuple(v.strip() for v in value.split("|") if v.strip())
                elif key == "id_column":
                    values[key] = value or None
                elif key in ("label_sars_cov_2", "age_column", "positive_token"):
                    values[key] = value
                else:
                    raise ConfigurationError(f"unknown schema key: {key!r}")
        return cls(**values)


@dataclass
class RawColumn:
    """One typed feature column with explicit missingness."""

    name: str
    kind: str  # "numeric" | "categorical-text"
    values: np.ndarray  # float64 for numeric, object (str) for text
    missing: np.ndarray  # bool mask, True where the cell was empty

    def take(self, idx: np.ndarray) -> "RawColumn":
        return RawColumn(self.name, self.kind, self.values[idx], self.missing[idx])


@dataclass
class CohortTable:
    """Feature columns plus the three task label vectors."""

    columns: list[RawColumn]
    labels: dict[str, np.ndarray]  # task -> {0,1}^N
    age_quantile: np.ndarray  # int in [0, 19]
    ids: list[str] | None = None

    @property
    def n(self) -> int:
        return int(self.age_quantile.size)

    def column(self, name: str) -> RawColumn:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def take(self, idx: np.ndarray) -> "CohortTable":
        return CohortTable(
            columns=[c.take(idx) for c in self.columns],
            labels={k: v[idx] for k, v in self.labels.items()},
            age_quantile=self.age_quantile[idx],
            ids=[self.ids[i] for i in idx] if self.ids is not None else None,
        )


@dataclass
class FoldAssignment:
    """Per-patient fold codes (0=train, 1=validation, 2=test)."""

    fold: np.ndarray  # int8 codes
    seed: int

    def indices(self, name: str) -> np.ndarray:
        return np.nonzero(self.fold == FOLD_NAMES.index(name))[0]

    def sizes(self) -> tuple[int, int, int]:
        return tuple(int(np.sum(self.fold == k)) for k in range(3))

    def take(self, idx: np.ndarray) -> "FoldAssignment":
        return FoldAssignment(self.fold[idx], self.seed)


def _parse_bool_cell(value: str, column: str, row: int) -> int:
    token = value.strip().casefold()
    if token in _TRUTHY_TOKENS:
        return 1
    if token in _FALSY_TOKENS:
        return 0
    raise IngestionError(
        f"cannot interpret {value!r} as a binary label (row {row}, column {column!r})"
    )


def _try_float(value: str) -> float | None:
    try:
        return float(value)
    except ValueError:
        return None


def load_cohort(path, schema: SchemaConfig | None = None) -> CohortTable:
    """Read the delimited cohort file into a typed table.

    Empty cells become explicit missing entries. Column kinds are
    inferred: a column is numeric when every observed cell parses as a
    float (locale-independent decimal point), otherwise categorical-text.
    Columns listed in ``schema.numeric_columns`` must be numeric; an
    unparseable cell there is an ingestion error with its coordinates.
    """
    schema = schema or SchemaConfig()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty cohort: file has no header row")
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    if not rows:
        raise IngestionError("empty cohort: file has no data rows")
    n = len(rows)
    index = {name: i for i, name in enumerate(header)}
    for col in sorted(schema.role_columns()):
        if col not in index:
            raise ConfigurationError(f"schema references missing column {col!r}")
    for col in schema.numeric_columns:
        if col not in index:
            raise ConfigurationError(f"schema references missing column {col!r}")

    def cell(r: int, name: str) -> str:
        j = index[name]
        return rows[r][j].strip() if j < len(rows[r]) else ""

    # labels
    sars = np.zeros(n, dtype=np.int64)
    for r in range(n):
        sars[r] = 1 if cell(r, schema.label_sars_cov_2).casefold() == schema.positive_token.casefold() else 0
    admission = np.zeros(n, dtype=np.int64)
    icu = np.zeros(n, dtype=np.int64)
    for cols, out in ((schema.label_admission, admission), (schema.label_icu, icu)):
        for name in cols:
            for r in range(n):
                value = cell(r, name)
                if value == "":
                    continue
                out[r] |= _parse_bool_cell(value, name, r)

    # age quantile
    age = np.zeros(n, dtype=np.int64)
    for r in range(n):
        raw = cell(r, schema.age_column)
        parsed = _try_float(raw) if raw else None
        if parsed is None or not float(parsed).is_integer() or not 0 <= parsed <= 19:
            raise IngestionError(
                f"age quantile must be an integer in [0, 19], got {raw!r} "
                f"(row {r}, column {schema.age_column!r})"
            )
        age[r] = int(parsed)

    role_cols = schema.role_columns() - {schema.age_column}
    columns: list[RawColumn] = []
    for name in header:
        if name in role_cols:
            continue
        j = index[name]
        raw_values = [rows[r][j].strip() if j < len(rows[r]) else "" for r in range(n)]
        missing = np.array([v == "" for v in raw_values], dtype=bool)
        observed = [(r, v) for r, v in enumerate(raw_values) if v != ""]
        parsed = [(r, _try_float(v)) for r, v in observed]
        bad = [(r, raw_values[r]) for r, p in parsed if p is None]
        if name in schema.numeric_columns and bad:
            r, v = bad[0]
            raise IngestionError(
                f"unparseable numeric cell {v!r} (row {r}, column {name!r})"
            )
        if observed and not bad:
            values = np.full(n, np.nan)
            for r, p in parsed:
                values[r] = p
            columns.append(RawColumn(name, "numeric", values, missing))
        else:
            values = np.array(
                [None if v == "" else v for v in raw_values], dtype=object
            )
            kind = "categorical-text" if observed else "numeric"
            if kind == "numeric":
                values = np.full(n, np.nan)
            columns.append(RawColumn(name, kind, values, missing))

    ids = None
    if schema.id_column:
        ids = [cell(r, schema.id_column) for r in range(n)]
    return CohortTable(
        columns=columns,
        labels={"sars_cov_2": sars, "admission": admission, "icu": icu},
        age_quantile=age,
        ids=ids,
    )


# ---------------------------------------------------------------------------
# Stratified fold assignment
#
# Within each stratum (age quantile x three labels) patients are shuffled by
# seed and allocated 50/20/30. Each stratum's per-fold count is the floor or
# ceiling of its exact quota, overall fold totals equal the rounded global
# quotas, and the per-fold count of SARS-positive patients is held to the
# floor/ceiling of its exact share, so per-fold positive rates cannot drift
# regardless of seed. Which strata round up is a seeded weighted draw over
# the allocations that keep the remaining problem solvable.
# ---------------------------------------------------------------------------


def _largest_remainder(quotas: np.ndarray) -> np.ndarray:
    total = int(round(float(np.sum(quotas))))
    base = np.floor(quotas + 1e-9).astype(np.int64)
    rem = quotas - base
    extras = total - int(base.sum())
    order = np.argsort(-rem, kind="stable")
    base[order[:extras]] += 1
    return base


def _quota_parts(quotas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Floor and fractional parts, snapping near-integer quotas exact."""
    snapped = np.where(np.abs(quotas - np.round(quotas)) < 1e-9, np.round(quotas), quotas)
    floors = np.floor(snapped).astype(np.int64)
    fracs = snapped - floors
    return floors, fracs


def _residual_feasible(counts: dict, capacity: np.ndarray) -> bool:
    """Hall condition for the remaining extras-assignment problem.

    ``counts`` aggregates remaining rows as (allowed-fold bitmask, extras
    needed) -> row count; ``capacity`` is extras still available per fold.
    Feasible iff for every fold subset T the demand that can only go to T
    fits in T's capacity.
    """
    for t_mask in range(8):
        cap = sum(int(capacity[f]) for f in range(3) if t_mask >> f & 1)
        demand = 0
        for (mask, need), cnt in counts.items():
            outside = bin(mask & ~t_mask & 0b111).count("1")
            if need > outside:
                demand += (need - outside) * cnt
        if demand > cap:
            return False
    return True


def _subsets_of(mask: int, size: int) -> list[tuple[int, ...]]:
    folds = [f for f in range(3) if mask >> f & 1]
    if size == 0:
        return [()]
    if size == 1:
        return [(f,) for f in folds]
    out = []
    for i in range(len(folds)):
        for j in range(i + 1, len(folds)):
            out.append((folds[i], folds[j]))
    return out


def _allocate_matrix(
    row_quotas: np.ndarray, col_targets: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Round an S x 3 quota matrix to integers.

    Every cell lands on the floor or ceiling of its exact quota, row sums
    are exact (row quotas sum to integers) and column sums equal
    ``col_targets``. Among the valid roundings, which rows round up in
    which fold is a seeded draw weighted by the fractional parts.
    """
    row_quotas = np.asarray(row_quotas, dtype=np.float64)
    n_rows = row_quotas.shape[0]
    floors, fracs = _quota_parts(row_quotas)
    row_extras = np.rint(row_quotas.sum(axis=1) - floors.sum(axis=1)).astype(np.int64)
    capacity = np.asarray(col_targets, dtype=np.int64) - floors.sum(axis=0)
    if np.any(capacity < 0) or int(capacity.sum()) != int(row_extras.sum()):
        raise PipelineError("fold allocation targets are inconsistent")

    masks = np.zeros(n_rows, dtype=np.int64)
    for s in range(n_rows):
        for f in range(3):
            if fracs[s, f] > 1e-9:
                masks[s] |= 1 << f

    counts: dict = {}
    for s in range(n_rows):
        if row_extras[s] > 0:
            key = (int(masks[s]), int(row_extras[s]))
            counts[key] = counts.get(key, 0) + 1
    if not _residual_feasible(counts, capacity):
        raise PipelineError("fold allocation infeasible for the given targets")

    extras = np.zeros((n_rows, 3), dtype=np.int64)
    for s in range(n_rows):
        need = int(row_extras[s])
        if need == 0:
            continue
        key = (int(masks[s]), need)
        counts[key] -= 1
        if counts[key] == 0:
            del counts[key]
        options = []
        weights = []
        for subset in _subsets_of(int(masks[s]), need):
            if any(capacity[f] < 1 for f in subset):
                continue
            trial = capacity.copy()
            for f in subset:
                trial[f] -= 1
            if _residual_feasible(counts, trial):
                options.append(subset)
                weights.append(max(float(np.prod([fracs[s, f] for f in subset])), 1e-12))
        if not options:
            raise PipelineError("fold allocation dead end")  # Hall check precludes this
        p = np.asarray(weights) / np.sum(weights)
        chosen = options[int(rng.choice(len(options), p=p))]
        for f in chosen:
            extras[s, f] = 1
            capacity[f] -= 1
    return floors + extras


def stratified_split(
    cohort: CohortTable,
    ratios: tuple[float, float, float] = (0.5, 0.2, 0.3),
    seed: int = 0,
) -> FoldAssignment:
    """Assign every patient to train/validation/test within label strata.

    Strata are (age quantile x SARS result x admission x ICU). The
    assignment is deterministic for a fixed seed.
    """
    ratios_arr = np.asarray(ratios, dtype=np.float64)
    if ratios_arr.size != 3 or abs(float(ratios_arr.sum()) - 1.0) > 1e-9:
        raise PipelineError("ratios must be three values summing to 1")
    if cohort.n == 0:
        raise PipelineError("cannot split an empty cohort")

    n = cohort.n
    sars = cohort.labels["sars_cov_2"]
    strata: dict[tuple, list[int]] = {}
    for i in range(n):
        key = (
            int(cohort.age_quantile[i]),
            int(sars[i]),
            int(cohort.labels["admission"][i]),
            int(cohort.labels["icu"][i]),
        )
        strata.setdefault(key, []).append(i)

    global_targets = _largest_remainder(n * ratios_arr)

    # fix the per-fold share of each SARS class before allocating strata
    group_values = sorted({key[1] for key in strata})
    group_sizes = {
        g: sum(len(v) for k, v in strata.items() if k[1] == g) for g in group_values
    }
    if len(group_values) == 1:
        group_targets = {group_values[0]: global_targets}
    else:
        quota_rows = np.array(
            [group_sizes[g] * ratios_arr for g in group_values], dtype=np.float64
        )
        allocated = _allocate_matrix(
            quota_rows, global_targets, rng_for(seed, "split-margin")
        )
        group_targets = {g: allocated[i] for i, g in enumerate(group_values)}

    fold = np.empty(n, dtype=np.int8)
    for g in group_values:
        keys = sorted(k for k in strata if k[1] == g)
        quota_rows = np.array(
            [len(strata[k]) * ratios_arr for k in keys], dtype=np.float64
        )
        counts = _allocate_matrix(
            quota_rows, group_targets[g], rng_for(seed, "split-extras", g)
        )
        for row, key in enumerate(keys):
            members = np.array(strata[key], dtype=np.int64)
            shuffled = members[rng_for(seed, "split-shuffle", key).permutation(members.size)]
            c_train, c_val = int(counts[row, 0]), int(counts[row, 1])
            fold[shuffled[:c_train]] = 0
            fold[shuffled[c_train : c_train + c_val]] = 1
            fold[shuffled[c_train + c_val :]] = 2
    return FoldAssignment(fold=fold, seed=seed)


def subcohort_positive(
    cohort: CohortTable, folds: FoldAssignment
) -> tuple[CohortTable, FoldAssignment]:
    """Restrict to SARS-positive patients, keeping each patient's fold."""
    positive = np.nonzero(cohort.labels["sars_cov_2"] == 1)[0]
    if positive.size == 0:
        raise PipelineError("no positive patients in cohort")
    return cohort.take(positive), folds.take(positive)
