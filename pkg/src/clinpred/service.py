"""Local scoring service for the persisted headline models.

Endpoints:
  POST /score   {"features": {name: value|null}, "tasks": [..]} -> per-task
                probability, operating threshold, triage flag and top-10
                signed what-if attributions
  GET  /schema  feature names, kinds and known categories for form building
  GET  /health  model hashes and uptime

JSON null is the only way to say "missing"; absent keys mean the same.
Responses are a pure function of the loaded artifacts and the request;
artifacts are loaded once and never mutated. Attributions come from
masked-prediction deltas (no labels at inference), which is a different
quantity than the test-fold loss-based importance report; the response
says so in its metadata.
"""

from __future__ import annotations

import time

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .data import TASKS
from .errors import ValidationError
from .models import ModelArtifact
from .runner import score_record

SCHEMA_VERSION = 1
ATTRIBUTION_BASIS = (
    "masked-prediction deltas per source feature, renormalized over the "
    "reported entries; distinct from test-fold loss-based importance"
)


def _schema_features(models: dict) -> list[dict]:
    merged: dict[str, dict] = {}
    for task in TASKS:
        if task not in models:
            continue
        state = models[task][0].preprocessor
        for name, kind in state.source_kinds.items():
            entry = merged.setdefault(
                name, {"name": name, "kind": kind, "categories": set(), "units": None}
            )
            if kind == "discrete":
                entry["categories"].update(
                    str(c) for c in state.discrete_categories[name]
                )
    out = []
    for name in sorted(merged):
        entry = merged[name]
        out.append(
            {
                "name": name,
                "kind": entry["kind"],
                "categories": sorted(entry["categories"]) if entry["categories"] else None,
                "units": entry["units"],
            }
        )
    return out


def create_app(
    models: dict[str, tuple[ModelArtifact, float]],
    model_hashes: dict[str, str] | None = None,
) -> FastAPI:
    """Build the service over immutable, already-loaded artifacts."""
    app = FastAPI(title="clinpred scoring service")
    started = time.time()
    hashes = model_hashes or {}
    schema_payload = {
        "schema_version": SCHEMA_VERSION,
        "features": _schema_features(models),
        "tasks": sorted(models),
    }

    @app.exception_handler(ValidationError)
    async def handle_validation_error(request, exc: ValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "error": {
                    "status": "invalid input",
                    "key": exc.key,
                    "message": str(exc),
                }
            },
        )

    @app.get("/schema")
    async def schema():
        return schema_payload

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "schema_version": SCHEMA_VERSION,
            "model_hashes": hashes,
            "uptime_s": round(time.time() - started, 3),
        }

    @app.post("/score")
    async def score(body: dict):
        if not isinstance(body, dict):
            raise ValidationError("request body must be a JSON object")
        features = body.get("features", {})
        if not isinstance(features, dict):
            raise ValidationError("features must be an object of name -> value")
        requested = body.get("tasks")
        if requested is None:
            requested = sorted(models)
        if not requested:
            raise ValidationError("at least one task must be requested")
        unknown = [t for t in requested if t not in models]
        if unknown:
            raise ValidationError(f"unknown task {unknown[0]!r}", key=unknown[0])
        response_tasks = {}
        for task in requested:
            artifact, threshold = models[task]
            result = score_record(artifact, features, top_k=10)
            reported_total = sum(abs(d) for _, d in result.deltas)
            if reported_total > 0:
                attributions = [
                    {"feature": name, "delta": d / reported_total}
                    for name, d in result.deltas
                ]
            else:
                attributions = [
                    {"feature": name, "delta": 0.0} for name, d in result.deltas
                ]
            response_tasks[task] = {
                "probability": result.probability,
                "operating_threshold": threshold,
                "triage_flag": bool(result.probability >= threshold),
                "attributions": attributions,
                "attribution_degenerate": result.degenerate,
                "model_hash": hashes.get(task),
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "tasks": response_tasks,
            "all_missing": all(v is None for v in features.values()) or not features,
            "attribution_basis": ATTRIBUTION_BASIS,
        }

    return app


def app_from_run_dir(out_dir) -> FastAPI:
    """Load the manifest's three headline artifacts and build the app."""
    from .runner import RunManifest, load_headline_artifacts

    models = load_headline_artifacts(out_dir)
    manifest = RunManifest.load(out_dir)
    hashes = {
        task: entry["families"][entry["headline_family"]]["artifact_sha256"]
        for task, entry in manifest.payload["tasks"].items()
    }
    return create_app(models, hashes)
