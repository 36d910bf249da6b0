"""Randomized hyperparameter search and validation-based selection.

Each search draws 30 configurations from the family's search space,
trains them on the training fold and ranks them by validation AUC. Runs
are independent: they may execute across a worker pool, and results are
identical regardless of scheduling because every run's hyperparameter
draw and training seed derive from (search seed, run index) alone.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .errors import PipelineError, TrainingDivergedError, UndefinedMetricError
from .metrics import ScoredSet, roc_auc
from .models import HYPERPARAMETER_SPACE, Hyperparams, ModelArtifact, predict, train
from .util import derive_seed

log = logging.getLogger(__name__)

DEFAULT_N_RUNS = 30


@dataclass(frozen=True)
class SearchSpec:
    family: str
    task: str
    n_runs: int = DEFAULT_N_RUNS
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise PipelineError("n_runs must be at least 1")


@dataclass
class TaskData:
    """Preprocessed folds for one task; the test fold never enters here."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


@dataclass
class CandidateRecord:
    run_index: int
    hyperparams: Hyperparams
    validation_auc: float
    artifact: ModelArtifact | None
    failed: bool = False
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)


def sample_hyperparams(family: str, rng_seed: int) -> Hyperparams:
    """One uniform draw from the family's search space.

    Discrete parameters pick from their choice list with equal
    probability; continuous parameters draw uniformly from their interval.
    Parameters are drawn in sorted name order so the draw depends only on
    the seed.
    """
    space = HYPERPARAMETER_SPACE[family]
    rng = np.random.default_rng(rng_seed)
    values = {}
    for name in sorted(space):
        spec = space[name]
        if spec[0] == "choice":
            values[name] = spec[1][int(rng.integers(0, len(spec[1])))]
        else:
            values[name] = float(rng.uniform(spec[1], spec[2]))
    return Hyperparams(family, values)


def validation_auc_for(artifact: ModelArtifact, x_val, y_val) -> tuple[float, list[str]]:
    scores = predict(artifact, x_val)
    try:
        return roc_auc(ScoredSet(scores, y_val)), []
    except UndefinedMetricError:
        return 0.5, ["validation labels single-class; AUC defined as 0.5"]


def _execute_run(args) -> dict:
    family, task, run_index, search_seed, x_train, y_train, x_val, y_val = args
    hp = sample_hyperparams(family, derive_seed(search_seed, "hyperparams", family, task, run_index))
    train_seed = search_seed + run_index
    started = perf_counter()
    try:
        artifact = train(family, hp, x_train, y_train, x_val, y_val, seed=train_seed, task=task)
    except TrainingDivergedError as exc:
        return {
            "run_index": run_index,
            "hyperparams": hp,
            "validation_auc": 0.0,
            "artifact": None,
            "failed": True,
            "wall_time": perf_counter() - started,
            "warnings": [f"training diverged at step {exc.step}: {exc}"],
        }
    auc, warnings = validation_auc_for(artifact, x_val, y_val)
    artifact.validation_auc = auc
    return {
        "run_index": run_index,
        "hyperparams": hp,
        "validation_auc": auc,
        "artifact": artifact,
        "failed": False,
        "wall_time": perf_counter() - started,
        "warnings": warnings + list(artifact.warnings),
    }


def run_search(spec: SearchSpec, data: TaskData, workers: int = 1) -> list[CandidateRecord]:
    """Train spec.n_runs candidates and score each by validation AUC.

    Diverged runs are recorded with AUC 0 and a failure flag; the search
    continues. Results are returned in run-index order.
    """
    x_train = np.asarray(getattr(data.x_train, "values", data.x_train), dtype=np.float64)
    x_val = np.asarray(getattr(data.x_val, "values", data.x_val), dtype=np.float64)
    y_train = np.asarray(data.y_train, dtype=np.float64)
    y_val = np.asarray(data.y_val, dtype=np.float64)
    jobs = [
        (spec.family, spec.task, run_index, spec.seed, x_train, y_train, x_val, y_val)
        for run_index in range(spec.n_runs)
    ]
    if workers > 1 and spec.n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_execute_run, jobs))
    else:
        raw = [_execute_run(job) for job in jobs]
    records = [CandidateRecord(**r) for r in sorted(raw, key=lambda r: r["run_index"])]

    failures = sum(1 for r in records if r.failed)
    if failures * 2 >= len(records) and failures > 0:
        log.warning(
            "search %s/%s: %d of %d runs failed", spec.family, spec.task, failures, len(records)
        )
    return records


def select_best(candidates: list[CandidateRecord]) -> CandidateRecord:
    """Highest validation AUC; ties break toward the lower run index."""
    if not candidates:
        raise PipelineError("cannot select from an empty candidate list")
    viable = [c for c in candidates if not c.failed]
    if not viable:
        raise PipelineError("all candidates failed; nothing to select")
    best = viable[0]
    for candidate in viable[1:]:
        if candidate.validation_auc > best.validation_auc:
            best = candidate
    return best
