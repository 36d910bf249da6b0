"""Synthetic demo cohort matching the public triage dataset's layout.

Generates a patient table with the same column names, label encoding,
missingness structure and marginal statistics as the public cohort file
(5644 patients, ~9.9% SARS-CoV-2 positive, mutually exclusive ward
destination columns, 20-quantile age, ~105 measurement columns arriving
in lab panels with heavy block missingness, and a handful of columns too
sparse to survive the drop rule). Class-conditional shifts in a few labs
and in which tests get ordered carry task signal of roughly the strength
reported for the real data: weak for predicting the test result, strong
for ward and ICU admission among positives.

Intended for demos and for exercising the full pipeline when the real
cohort file is not on disk; point the pipeline at the real file for
actual reproduction work.
"""

from __future__ import annotations

import csv

import numpy as np

from .data import KAGGLE_AGE, KAGGLE_ICU, KAGGLE_ID, KAGGLE_SARS, KAGGLE_SEMI, KAGGLE_WARD
from .util import rng_for, sigmoid

DEFAULT_N = 5644

HEMATOLOGY = [
    "Hematocrit", "Hemoglobin", "Platelets", "Mean platelet volume",
    "Red blood Cells", "Lymphocytes",
    "Mean corpuscular hemoglobin concentration (MCHC)", "Leukocytes",
    "Basophils", "Mean corpuscular hemoglobin (MCH)", "Eosinophils",
    "Mean corpuscular volume (MCV)", "Monocytes",
    "Red blood cell distribution width (RDW)", "Neutrophils",
    "Erythroblasts", "Myelocytes", "Metamyelocytes", "Segmented neutrophils",
]
BIOCHEMISTRY = [
    "Serum Glucose", "Creatinine", "Urea", "Potassium", "Sodium",
    "Alanine transaminase", "Aspartate transaminase",
    "Gamma-glutamyltransferase", "Total Bilirubin", "Direct Bilirubin",
    "Indirect Bilirubin", "Lactic Dehydrogenase", "Alkaline phosphatase",
    "C reactive protein",
]
ARTERIAL_GAS = [
    "pH (arterial blood gas analysis)", "pCO2 (arterial blood gas analysis)",
    "pO2 (arterial blood gas analysis)", "HCO3 (arterial blood gas analysis)",
    "Base excess (arterial blood gas analysis)", "Arterial Lactic Acid",
    "Hb saturation (arterial blood gases)",
    "Total CO2 (arterial blood gas analysis)",
    "ctO2 (arterial blood gas analysis)", "Arterial Fio2",
]
VENOUS_GAS = [
    "pH (venous blood gas analysis)", "pCO2 (venous blood gas analysis)",
    "pO2 (venous blood gas analysis)", "HCO3 (venous blood gas analysis)",
    "Base excess (venous blood gas analysis)",
    "Total CO2 (venous blood gas analysis)",
    "Hb saturation (venous blood gas analysis)", "Venous Lactic Acid",
]
MISC_CONTINUOUS = [
    "Phosphor", "Calcium", "Magnesium", "International normalized ratio (INR)",
    "Mean arterial pressure", "Respiratory rate", "Heart rate",
    "Body temperature", "Oxygen saturation", "Glycated hemoglobin",
    "Triglycerides", "Total cholesterol",
]
VIRAL_PANEL = [
    "Respiratory Syncytial Virus", "Influenza A", "Influenza B",
    "Parainfluenza 1", "CoronavirusNL63", "Rhinovirus/Enterovirus",
    "Mycoplasma pneumoniae", "Coronavirus HKU1", "Parainfluenza 3",
    "Chlamydophila pneumoniae", "Adenovirus", "Parainfluenza 4",
    "Coronavirus229E", "CoronavirusOC43", "Inf A H1N1 2009",
    "Bordetella pertussis", "Metapneumovirus", "Parainfluenza 2",
]
RAPID_TESTS = ["Influenza B, rapid test", "Influenza A, rapid test", "Strepto A"]
URINE_CONTINUOUS = ["Urine - Density", "Urine - pH"]
URINE_CATEGORICAL = {
    "Urine - Esterase": ["absent", "detected"],
    "Urine - Aspect": ["clear", "lightly_cloudy", "cloudy", "altered"],
    "Urine - Hemoglobin": ["absent", "present"],
    "Urine - Bile pigments": ["absent", "present"],
    "Urine - Ketone Bodies": ["absent", "present"],
    "Urine - Nitrite": ["absent", "present"],
    "Urine - Urobilinogen": ["normal", "absent"],
    "Urine - Protein": ["absent", "traces", "present"],
    "Urine - Leukocytes": ["<1000", "1000-4000", "4000-8000", ">8000"],
    "Urine - Color": [
        "light_yellow", "yellow", "citrus_yellow", "orange",
        "amber", "dark_yellow", "straw", "reddish",
    ],
}
ULTRA_SPARSE = [
    "D-Dimer", "Ferritin", "Fibrinogen", "Ionized calcium",
    "Prothrombin time (PT), Activity", "Vitamin B12", "Albumin",
    "Partial thromboplastin time (PTT)", "Lipase",
]

# class-conditional mean shift (in sd units) applied to SARS positives;
# kept weak: most of the task-(i) signal rides on test-ordering patterns
SARS_LAB_SHIFTS = {
    "Leukocytes": -0.14,
    "Platelets": -0.12,
    "Lymphocytes": -0.10,
    "Monocytes": +0.08,
    "Eosinophils": -0.09,
    "Creatinine": +0.06,
    "C reactive protein": +0.08,
}
# shifts applied among positives destined for the ward / the ICU
ADMISSION_LAB_SHIFTS = {
    "Lactic Dehydrogenase": +1.9,
    "Gamma-glutamyltransferase": +1.5,
    "HCO3 (arterial blood gas analysis)": -1.6,
    "HCO3 (venous blood gas analysis)": -1.2,
    "C reactive protein": +1.0,
    "Urea": +0.8,
}
ICU_LAB_SHIFTS = {
    "pCO2 (arterial blood gas analysis)": +3.2,
    "pH (arterial blood gas analysis)": -3.0,
    "Arterial Lactic Acid": +2.0,
    "pCO2 (venous blood gas analysis)": +2.4,
    "pH (venous blood gas analysis)": -2.2,
    "Oxygen saturation": -2.6,
    "Lactic Dehydrogenase": +1.4,
    "Heart rate": +1.8,
    "Respiratory rate": +2.0,
}


def measurement_columns() -> list[str]:
    cols: list[str] = []
    cols += HEMATOLOGY + BIOCHEMISTRY + ARTERIAL_GAS + VENOUS_GAS + MISC_CONTINUOUS
    cols += VIRAL_PANEL + RAPID_TESTS
    cols += URINE_CONTINUOUS + list(URINE_CATEGORICAL)
    cols += ULTRA_SPARSE
    return cols


def _weighted_pick(rng: np.random.Generator, weights: np.ndarray, count: int) -> np.ndarray:
    """Indices of `count` draws without replacement, probability ~ weights."""
    gumbel = rng.gumbel(size=weights.size)
    return np.argsort(-(weights + gumbel), kind="stable")[:count]


def generate_cohort_arrays(n: int = DEFAULT_N, seed: int = 0) -> dict:
    """All cohort columns as arrays, plus ground-truth latents for tests."""
    rng = rng_for(seed, "synthetic-cohort")
    n_pos = max(1, int(round(n * 558 / DEFAULT_N)))

    age = rng.integers(0, 20, size=n)
    z = rng.normal(size=n)  # latent acuity
    sars_logit = 0.08 * z + 0.027 * (age - 9.5)
    sars = np.zeros(n, dtype=np.int64)
    sars[_weighted_pick(rng, sars_logit, n_pos)] = 1

    u_adm = rng.normal(size=n)
    u_icu = rng.normal(size=n)
    adm_severity = 0.6 * z + 1.6 * u_adm
    icu_severity = 0.6 * z + 2.2 * u_icu

    admission = np.zeros(n, dtype=np.int64)
    icu = np.zeros(n, dtype=np.int64)
    pos_idx = np.nonzero(sars == 1)[0]
    neg_idx = np.nonzero(sars == 0)[0]
    n_pos_adm = max(1, int(round(0.0645 * pos_idx.size)))
    n_pos_icu = max(1, int(round(0.0287 * pos_idx.size)))
    adm_pick = pos_idx[_weighted_pick(rng, adm_severity[pos_idx], n_pos_adm)]
    admission[adm_pick] = 1
    icu_candidates = np.setdiff1d(pos_idx, adm_pick)
    icu_pick = icu_candidates[_weighted_pick(rng, icu_severity[icu_candidates], n_pos_icu)]
    icu[icu_pick] = 1
    # ward destinations among negatives keep the population rates realistic
    n_neg_adm = int(round(0.0078 * neg_idx.size))
    n_neg_icu = int(round(0.0146 * neg_idx.size))
    neg_adm = neg_idx[_weighted_pick(rng, 0.4 * z[neg_idx] + u_adm[neg_idx], n_neg_adm)]
    admission[neg_adm] = 1
    neg_rest = np.setdiff1d(neg_idx, neg_adm)
    neg_icu = neg_rest[_weighted_pick(rng, 0.4 * z[neg_rest] + u_icu[neg_rest], n_neg_icu)]
    icu[neg_icu] = 1
    ward_any = (admission == 1) | (icu == 1)

    values: dict[str, np.ndarray] = {}
    observed: dict[str, np.ndarray] = {}

    def panel_observed(base_logit, sars_w=0.0, ward_w=0.0, z_w=0.0):
        logit = base_logit + sars_w * sars + ward_w * ward_any + z_w * z
        return rng.random(n) < sigmoid(logit)

    def continuous(name, panel_mask, extra_shift=None):
        x = 0.35 * z + rng.normal(scale=0.94, size=n)
        x += SARS_LAB_SHIFTS.get(name, 0.0) * sars
        x += ADMISSION_LAB_SHIFTS.get(name, 0.0) * admission
        x += ICU_LAB_SHIFTS.get(name, 0.0) * icu
        if extra_shift is not None:
            x += extra_shift
        values[name] = np.round(x, 6)
        observed[name] = panel_mask.copy()

    hematology_mask = panel_observed(-1.60, sars_w=0.06, ward_w=2.6, z_w=0.30)
    for name in HEMATOLOGY:
        continuous(name, hematology_mask & (rng.random(n) < 0.985))
    biochem_mask = panel_observed(-1.95, sars_w=0.05, ward_w=2.6, z_w=0.30)
    for name in BIOCHEMISTRY:
        continuous(name, biochem_mask & (rng.random(n) < 0.9))
    arterial_mask = panel_observed(-3.45, sars_w=0.08, ward_w=3.4, z_w=0.5)
    for name in ARTERIAL_GAS:
        if name == "Arterial Lactic Acid":
            # ordered far more often for eventually-positive patients: the
            # missingness indicator itself carries most of the task-(i) signal
            lactic_mask = panel_observed(-3.15, sars_w=2.35, ward_w=3.0, z_w=0.45)
            continuous(name, lactic_mask)
        else:
            continuous(name, arterial_mask & (rng.random(n) < 0.92))
    venous_mask = panel_observed(-3.0, sars_w=0.05, ward_w=3.0, z_w=0.45)
    for name in VENOUS_GAS:
        continuous(name, venous_mask & (rng.random(n) < 0.92))
    misc_mask = panel_observed(-2.3, sars_w=0.04, ward_w=2.2, z_w=0.25)
    for name in MISC_CONTINUOUS:
        continuous(name, misc_mask & (rng.random(n) < 0.9))

    viral_mask = panel_observed(1.1, sars_w=0.04, ward_w=0.6)
    for i, name in enumerate(VIRAL_PANEL):
        base_rate = 0.10 if i < 6 else 0.04
        # a co-detected respiratory virus argues against SARS-CoV-2
        rate = np.where(sars == 1, base_rate * 0.8, base_rate)
        detected = rng.random(n) < rate
        values[name] = np.where(detected, "detected", "not_detected").astype(object)
        observed[name] = viral_mask & (rng.random(n) < 0.97)
    for name in RAPID_TESTS:
        detected = rng.random(n) < 0.05
        values[name] = np.where(detected, "positive", "negative").astype(object)
        observed[name] = panel_observed(-1.2, sars_w=0.2)

    urine_mask = panel_observed(-2.05, ward_w=1.8, z_w=0.20)
    density = 1.005 + 0.005 * rng.integers(0, 6, size=n)
    values["Urine - Density"] = np.round(density, 3)
    observed["Urine - Density"] = urine_mask.copy()
    values["Urine - pH"] = (5.0 + rng.integers(0, 5, size=n)).astype(np.float64)
    observed["Urine - pH"] = urine_mask & (rng.random(n) < 0.97)
    for name, cats in URINE_CATEGORICAL.items():
        probs = np.linspace(2.0, 0.4, len(cats))
        probs = probs / probs.sum()
        draws = rng.choice(len(cats), size=n, p=probs)
        values[name] = np.array([cats[k] for k in draws], dtype=object)
        observed[name] = urine_mask & (rng.random(n) < 0.95)

    for i, name in enumerate(ULTRA_SPARSE):
        count = i % 5  # 0..4 observed values across the whole cohort
        mask = np.zeros(n, dtype=bool)
        if count:
            mask[rng.choice(n, size=count, replace=False)] = True
        values[name] = np.round(rng.normal(size=n), 6)
        observed[name] = mask

    ids = np.array([f"synth-{seed:03d}-{i:05d}" for i in range(n)], dtype=object)
    return {
        "ids": ids,
        "age": age,
        "sars": sars,
        "admission": admission,
        "icu": icu,
        "values": values,
        "observed": observed,
        "latents": {"z": z, "sars_logit": sars_logit,
                    "adm_severity": adm_severity, "icu_severity": icu_severity},
    }


def write_demo_cohort(path, n: int = DEFAULT_N, seed: int = 0) -> None:
    """Write the synthetic cohort as a CSV in the public file's layout."""
    data = generate_cohort_arrays(n=n, seed=seed)
    columns = measurement_columns()
    header = [KAGGLE_ID, KAGGLE_AGE, KAGGLE_SARS, KAGGLE_WARD, KAGGLE_SEMI, KAGGLE_ICU]
    header += columns
    sars_text = np.where(data["sars"] == 1, "positive", "negative")
    ward_text = np.where(data["admission"] == 1, "t", "f")
    icu_text = np.where(data["icu"] == 1, "t", "f")
    semi_text = np.full(n, "f", dtype=object)  # semi-intensive kept empty of signal

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [
                data["ids"][i],
                str(int(data["age"][i])),
                sars_text[i],
                ward_text[i],
                semi_text[i],
                icu_text[i],
            ]
            for name in columns:
                if data["observed"][name][i]:
                    row.append(str(data["values"][name][i]))
                else:
                    row.append("")
            writer.writerow(row)
