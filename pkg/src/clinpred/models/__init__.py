"""Five predictor families behind one train/predict contract.

Every family trains on a dense feature matrix and produces scores in
[0, 1]. Training is deterministic given (hyperparameters, data, seed);
prediction is deterministic and row-stable, so a record scored alone is
bit-identical to the same record inside a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PipelineError, SchemaMismatchError
from ..preprocess import FeatureMatrix, PreprocessorState

FAMILIES = ("lr", "nn", "rf", "svm", "xgb")

# Hyperparameter search space: ("choice", [...]) drawn uniformly from the
# list, ("uniform", lo, hi) drawn uniformly from the continuous interval.
HYPERPARAMETER_SPACE: dict[str, dict[str, tuple]] = {
    "lr": {
        "c": ("choice", [0.01, 0.1, 1.0, 10.0]),
    },
    "nn": {
        "hidden_units": ("choice", [16, 32, 64, 128]),
        "n_layers": ("choice", [1, 2, 3]),
        "activation": ("choice", ["relu", "selu", "elu"]),
        "batch_size": ("choice", [16, 32, 64, 128]),
        "l2": ("choice", [0.0, 0.00001, 0.0001]),
        "learning_rate": ("choice", [0.003, 0.03]),
        "dropout": ("uniform", 0.0, 0.25),
    },
    "rf": {
        "max_depth": ("choice", [3, 4, 5]),
        "n_trees": ("choice", [32, 64, 128, 256]),
    },
    "svm": {
        "c": ("choice", [0.01, 0.1, 1.0, 10.0]),
        "kernel": ("choice", ["polynomial", "rbf", "sigmoid"]),
        "degree": ("choice", [3, 5, 7]),
    },
    "xgb": {
        "subsample": ("choice", [0.25, 0.5, 0.75, 1.0]),
        "max_depth": ("choice", [2, 3, 4, 5, 6, 7, 8]),
        "min_split_loss": ("choice", [0.0, 0.1, 1.0, 10.0]),
        "learning_rate": ("choice", [0.003, 0.03, 0.3, 0.5]),
        "l1": ("choice", [1.0, 0.1, 0.001, 0.0]),
        "l2": ("choice", [1.0, 0.1, 0.001, 0.0]),
        "n_rounds": ("choice", [5, 10, 15, 20]),
    },
}


@dataclass(frozen=True)
class Hyperparams:
    """A complete hyperparameter assignment for one family."""

    family: str
    values: dict

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PipelineError(f"unknown model family {self.family!r}")
        space = HYPERPARAMETER_SPACE[self.family]
        missing = sorted(set(space) - set(self.values))
        extra = sorted(set(self.values) - set(space))
        if missing or extra:
            raise PipelineError(
                f"hyperparameters for {self.family} incomplete "
                f"(missing: {missing}, unknown: {extra})"
            )
        for name, spec in space.items():
            value = self.values[name]
            if spec[0] == "choice":
                if value not in spec[1]:
                    raise PipelineError(
                        f"{self.family}.{name}={value!r} not in {spec[1]}"
                    )
            else:
                lo, hi = spec[1], spec[2]
                if not (lo <= value <= hi):
                    raise PipelineError(
                        f"{self.family}.{name}={value!r} outside [{lo}, {hi}]"
                    )

    def to_jsonable(self) -> dict:
        return {"family": self.family, "values": dict(self.values)}

    @classmethod
    def from_jsonable(cls, payload: dict) -> "Hyperparams":
        return cls(payload["family"], payload["values"])


@dataclass
class ModelArtifact:
    """One trained predictor plus everything needed to score raw records."""

    family: str
    hyperparams: Hyperparams
    state: object
    train_seed: int
    task: str | None = None
    preprocessor: PreprocessorState | None = None
    validation_auc: float | None = None
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)


@dataclass
class ConstantState:
    """Fallback for degenerate single-class training labels."""

    score: float

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], self.score, dtype=np.float64)

    def to_jsonable(self) -> dict:
        return {"model": "constant", "score": self.score}

    @classmethod
    def from_jsonable(cls, payload: dict) -> "ConstantState":
        return cls(score=payload["score"])


def _validate_training_inputs(x_train, y_train, x_val, y_val):
    if x_train.shape[0] != y_train.size:
        raise PipelineError("X_train row count does not match y_train")
    if x_val is not None and x_val.shape[0] != np.asarray(y_val).size:
        raise PipelineError("X_val row count does not match y_val")
    if x_train.shape[0] == 0:
        raise PipelineError("cannot train on an empty fold")


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.values
    return np.asarray(x, dtype=np.float64)


def train(
    family: str,
    hyperparams: Hyperparams,
    x_train,
    y_train,
    x_val=None,
    y_val=None,
    seed: int = 0,
    task: str | None = None,
    preprocessor: PreprocessorState | None = None,
) -> ModelArtifact:
    """Train one model; degenerate single-class labels yield a constant model."""
    if hyperparams.family != family:
        raise PipelineError("hyperparameter family does not match requested family")
    xt = _as_matrix(x_train)
    y = np.asarray(y_train, dtype=np.float64)
    xv = None if x_val is None else _as_matrix(x_val)
    yv = None if y_val is None else np.asarray(y_val, dtype=np.float64)
    _validate_training_inputs(xt, y, xv, yv)

    warnings: list[str] = []
    if y.min() == y.max():
        warnings.append("training labels contain a single class; constant model")
        return ModelArtifact(
            family=family,
            hyperparams=hyperparams,
            state=ConstantState(score=float(y[0])),
            train_seed=seed,
            task=task,
            preprocessor=preprocessor,
            degenerate=True,
            warnings=warnings,
        )

    if family == "lr":
        from .logistic import fit_logistic

        state = fit_logistic(hyperparams.values, xt, y)
    elif family == "nn":
        from .neural import fit_mlp

        state = fit_mlp(hyperparams.values, xt, y, xv, yv, seed)
    elif family == "rf":
        from .forest import fit_forest

        state = fit_forest(hyperparams.values, xt, y, seed)
    elif family == "svm":
        from .svm import fit_svm

        state, svm_warnings = fit_svm(hyperparams.values, xt, y, xv, yv)
        warnings.extend(svm_warnings)
    elif family == "xgb":
        from .boosting import fit_boosted_trees

        state = fit_boosted_trees(hyperparams.values, xt, y, seed)
    else:
        raise PipelineError(f"unknown model family {family!r}")

    return ModelArtifact(
        family=family,
        hyperparams=hyperparams,
        state=state,
        train_seed=seed,
        task=task,
        preprocessor=preprocessor,
        warnings=warnings,
    )


def predict(artifact: ModelArtifact, x) -> np.ndarray:
    """Probability-like scores in [0, 1], deterministic and row-stable."""
    if isinstance(x, FeatureMatrix) and artifact.preprocessor is not None:
        expected = artifact.preprocessor.feature_layout
        if x.names != expected:
            missing = [n for n in expected if n not in x.names]
            extra = [n for n in x.names if n not in expected]
            raise SchemaMismatchError(
                f"feature layout mismatch (missing: {missing}, unexpected: {extra})"
            )
    matrix = _as_matrix(x)
    scores = artifact.state.predict_scores(matrix)
    if not np.all(np.isfinite(scores)):
        raise PipelineError("model produced non-finite scores")
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise PipelineError("model produced scores outside [0, 1]")
    return scores
