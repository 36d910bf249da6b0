import csv
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

KAGGLE_HEADER = [
    "Patient ID",
    "Patient age quantile",
    "SARS-Cov-2 exam result",
    "Patient addmited to regular ward (1=yes, 0=no)",
    "Patient addmited to semi-intensive unit (1=yes, 0=no)",
    "Patient addmited to intensive care unit (1=yes, 0=no)",
    "Lab A",
    "Lab B",
    "Lab C",
    "Color test",
    "Lab D",
    "Lab E",
    "Lab F",
]


def write_smoke_cohort(path, seed=0):
    """Sixty patients in chunky strata so every (task, fold) keeps both classes."""
    rng = np.random.default_rng(seed)
    rows = []

    def make_row(pid, sars, adm, icu):
        lab1 = rng.normal() + (1.2 if sars else 0) + (1.5 if adm else 0)
        lab2 = rng.normal() - (2.0 if icu else 0)
        color = rng.choice(["red", "blue", "green"])
        return [
            pid,
            "9",
            "positive" if sars else "negative",
            "t" if adm else "f",
            "f",
            "t" if icu else "f",
            f"{lab1:.4f}",
            "" if rng.random() < 0.3 else f"{lab2:.4f}",
            f"{rng.normal():.4f}",
            "" if rng.random() < 0.5 else color,
            f"{rng.normal():.4f}",
            f"{rng.normal():.4f}",
            f"{rng.normal():.4f}",
        ]

    pid = 0
    for sars, adm, icu, count in ((1, 1, 0, 10), (1, 0, 1, 6), (1, 0, 0, 4), (0, 0, 0, 40)):
        for _ in range(count):
            rows.append(make_row(f"p{pid}", sars, adm, icu))
            pid += 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(KAGGLE_HEADER)
        writer.writerows(rows)
    return path


@pytest.fixture(scope="session")
def smoke_cohort_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cohort") / "smoke.csv"
    return write_smoke_cohort(path)


@pytest.fixture(scope="session")
def smoke_run(tmp_path_factory, smoke_cohort_path):
    """One full pipeline run on the smoke cohort, shared across tests."""
    from clinpred.config import PipelineConfig
    from clinpred.runner import run_pipeline

    out_dir = tmp_path_factory.mktemp("run")
    config = PipelineConfig(
        cohort=str(smoke_cohort_path),
        seed=7,
        n_runs=2,
        out_dir=str(out_dir),
        workers=1,
        bootstrap_n=30,
    )
    manifest = run_pipeline(config)
    return config, manifest
