"""Report tables: metric cells with CIs, significance daggers, curve dumps."""

from __future__ import annotations

import re

from .errors import PipelineError
from .metrics import METRIC_NAMES

DAGGER = "†"  # dagger marking significance against the best model

_CELL_RE = re.compile(
    r"^\s*([0-9]*\.?[0-9]+)\s*\(\s*([0-9]*\.?[0-9]+)\s*,\s*([0-9]*\.?[0-9]+)\s*\)\s*$"
)

METRIC_HEADERS = {
    "auc": "AUC",
    "aupr": "AUPR",
    "sensitivity": "Sensitivity",
    "specificity": "Specificity",
    "spec_at_95_sens": "Spec@95%Sens",
}


def format_metric_cell(point: float, low: float, high: float) -> str:
    return f"{point:.2f} ({low:.2f}, {high:.2f})"


def parse_metric_cell(text: str) -> tuple[float, float, float]:
    match = _CELL_RE.match(text)
    if not match:
        raise PipelineError(f"cannot parse metric cell {text!r}")
    return tuple(float(g) for g in match.groups())


def metrics_table_rows(per_family: dict[str, dict], headline: str) -> list[list[str]]:
    """Rows for one task's metric table, best test AUC first.

    per_family: family -> {"point", "ci_low", "ci_high", "significance"}
    where significance maps metric -> bool for non-headline families.
    """
    header = ["family"]
    for name in METRIC_NAMES:
        header.append(METRIC_HEADERS[name])
        header.append(METRIC_HEADERS[name] + "_sig")
    rows = [header]
    ordered = sorted(
        per_family, key=lambda fam: (-per_family[fam]["point"]["auc"], fam != headline, fam)
    )
    for family in ordered:
        entry = per_family[family]
        row = [family]
        for name in METRIC_NAMES:
            row.append(
                format_metric_cell(
                    entry["point"][name], entry["ci_low"][name], entry["ci_high"][name]
                )
            )
            significant = entry.get("significance", {}).get(name, False)
            row.append(DAGGER if (significant and family != headline) else "")
        rows.append(row)
    return rows


def write_tsv(rows: list[list], path):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def read_tsv(path) -> list[list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n").split("\t") for line in fh if line.strip()]


def curve_rows(points, kind: str) -> list[list]:
    if kind == "roc":
        header = ["fpr", "tpr", "threshold"]
    elif kind == "pr":
        header = ["recall", "precision", "threshold"]
    else:
        raise PipelineError(f"unknown curve kind {kind!r}")
    rows = [header]
    for p in points:
        rows.append([repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])
    return rows


def importance_rows(report) -> list[list]:
    rows = [["rank", "feature", "relative_importance_pct"]]
    for rank, idx in enumerate(report.ranking(), start=1):
        rows.append(
            [rank, report.names[idx], f"{100.0 * float(report.importances[idx]):.4f}"]
        )
    return rows
