"""Versioned JSON persistence for model artifacts and stage outputs.

JSON keeps floats at full repr precision, so a serialized artifact
reproduces its predictions bit for bit after loading.
"""

from __future__ import annotations

import json
import os
import tempfile

from .errors import PipelineError
from .models import ConstantState, Hyperparams, ModelArtifact
from .models.boosting import BoostedTreesState
from .models.forest import ForestState
from .models.logistic import LogisticState
from .models.neural import MLPState
from .models.svm import SvmState
from .preprocess import PreprocessorState

ARTIFACT_FORMAT_VERSION = 1

_STATE_CLASSES = {
    "constant": ConstantState,
    "logistic": LogisticState,
    "mlp": MLPState,
    "forest": ForestState,
    "svm": SvmState,
    "boosted_trees": BoostedTreesState,
}


def artifact_to_jsonable(artifact: ModelArtifact) -> dict:
    return {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "kind": "model_artifact",
        "family": artifact.family,
        "task": artifact.task,
        "train_seed": artifact.train_seed,
        "validation_auc": artifact.validation_auc,
        "degenerate": artifact.degenerate,
        "warnings": list(artifact.warnings),
        "hyperparams": artifact.hyperparams.to_jsonable(),
        "preprocessor": (
            artifact.preprocessor.to_jsonable() if artifact.preprocessor else None
        ),
        "state": artifact.state.to_jsonable(),
    }


def artifact_from_jsonable(payload: dict) -> ModelArtifact:
    if payload.get("kind") != "model_artifact":
        raise PipelineError("not a serialized model artifact")
    if payload.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise PipelineError(
            f"unsupported artifact format version {payload.get('format_version')!r}"
        )
    state_payload = payload["state"]
    state_cls = _STATE_CLASSES.get(state_payload.get("model"))
    if state_cls is None:
        raise PipelineError(f"unknown model state {state_payload.get('model')!r}")
    return ModelArtifact(
        family=payload["family"],
        hyperparams=Hyperparams.from_jsonable(payload["hyperparams"]),
        state=state_cls.from_jsonable(state_payload),
        train_seed=payload["train_seed"],
        task=payload["task"],
        preprocessor=(
            PreprocessorState.from_jsonable(payload["preprocessor"])
            if payload["preprocessor"]
            else None
        ),
        validation_auc=payload["validation_auc"],
        degenerate=payload["degenerate"],
        warnings=list(payload["warnings"]),
    )


def write_json(payload, path):
    """Atomic JSON write; refuses NaN/Inf so bugs fail loudly."""
    directory = os.path.dirname(os.fspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, allow_nan=False, indent=None, separators=(",", ":"))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_artifact(artifact: ModelArtifact, path):
    write_json(artifact_to_jsonable(artifact), path)


def load_artifact(path) -> ModelArtifact:
    return artifact_from_jsonable(read_json(path))
