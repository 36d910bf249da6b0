"""Clinical risk prediction pipeline for SARS-CoV-2 triage.

Subpackages cover the full workflow: cohort ingestion and stratified
splitting (:mod:`clinpred.data`), train-fold preprocessing with chained
imputation (:mod:`clinpred.preprocess`), five natively implemented model
families (:mod:`clinpred.models`), randomized hyperparameter search
(:mod:`clinpred.tuner`), bootstrap evaluation metrics
(:mod:`clinpred.metrics`), masking-based feature importance
(:mod:`clinpred.explain`), end-to-end orchestration
(:mod:`clinpred.runner`) and a local scoring service
(:mod:`clinpred.service`).
"""

__version__ = "0.1.0"
