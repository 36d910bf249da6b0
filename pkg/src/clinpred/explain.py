"""Masking-based marginal feature importance.

For a trained model, each post-preprocessing feature is masked in turn
(set to 0: the training mean for standardized values, the absent state
for one-hot and indicator columns) and the increase in test-fold binary
cross entropy over the unmasked baseline becomes the feature's
contribution. Contributions clip at zero and normalize to relative
importances summing to one. The test fold's ground-truth labels make the
contributions exact; nothing is estimated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError, SchemaMismatchError, UndefinedMetricError
from .models import ModelArtifact
from .models.svm import SvmState, _kernel_from_products
from .preprocess import FeatureMatrix, PreprocessorState
from .util import sigmoid

SCORE_CLIP = 1e-7
TOP_K_DISPLAY = 10


@dataclass
class ImportanceReport:
    names: list[str]
    importances: np.ndarray  # relative, nonnegative, sums to 1
    contributions: np.ndarray  # raw clipped loss increases
    loss_baseline: float
    model_label: str
    degenerate: bool = False

    def ranking(self) -> list[int]:
        order = sorted(range(len(self.names)), key=lambda i: (-self.importances[i], i))
        return order

    def top(self, k: int = TOP_K_DISPLAY) -> list[tuple[str, float]]:
        return [(self.names[i], float(self.importances[i])) for i in self.ranking()[:k]]

    def to_jsonable(self) -> dict:
        return {
            "names": self.names,
            "importances": self.importances.tolist(),
            "contributions": self.contributions.tolist(),
            "loss_baseline": self.loss_baseline,
            "model_label": self.model_label,
            "degenerate": self.degenerate,
        }


def _bce(scores: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(scores, SCORE_CLIP, 1.0 - SCORE_CLIP)
    return float(np.mean(-labels * np.log(p) - (1.0 - labels) * np.log(1.0 - p)))


def _fast_scorer(artifact: ModelArtifact):
    """Batch scoring path for repeated maskings.

    Importance compares losses computed through one consistent path, so
    plain BLAS products are fine here even though they are not bit
    identical to the row-stable official predict.
    """
    state = artifact.state
    from .models import ConstantState
    from .models.logistic import LogisticState
    from .models.neural import MLPState, _activate, BN_EPS

    if isinstance(state, LogisticState):
        return lambda x: sigmoid(x @ state.weights + state.bias)
    if isinstance(state, MLPState):
        def mlp_scores(x):
            h = x
            for w, b, gamma, beta, mu, var in zip(
                state.weights, state.biases, state.gammas, state.betas,
                state.run_means, state.run_vars,
            ):
                a = h @ w + b
                h = _activate(state.activation, gamma * (a - mu) / np.sqrt(var + BN_EPS) + beta)
            return sigmoid(h @ state.out_weights + state.out_bias)
        return mlp_scores
    if isinstance(state, ConstantState):
        return state.predict_scores
    return state.predict_scores  # tree ensembles are already batch-fast


def _svm_masked_scores(state: SvmState, x: np.ndarray) -> callable:
    """Per-feature masked scores via incremental kernel updates.

    Masking one column shifts every inner product by x_i * sv_i and every
    squared distance accordingly, so the kernel matrix updates in O(n*sv)
    per feature instead of a full recompute.
    """
    sv = state.support_vectors
    kp = {
        "kernel": state.kernel,
        "degree": state.degree,
        "gamma": state.gamma,
        "coef0": state.coef0,
    }
    products = x @ sv.T
    x_norms = np.einsum("ij,ij->i", x, x)
    sv_norms = np.einsum("ij,ij->i", sv, sv)

    def scores_for(col: int | None) -> np.ndarray:
        if col is None:
            p, xn = products, x_norms
        else:
            # only the input is masked; the support vectors keep column col
            p = products - np.outer(x[:, col], sv[:, col])
            xn = x_norms - x[:, col] ** 2
        k = _kernel_from_products(p, xn, sv_norms, kp)
        margins = k @ state.dual_coef + state.intercept
        return sigmoid(-(state.platt_a * margins + state.platt_b))

    return scores_for


def marginal_importance(
    artifact: ModelArtifact, x_test, y_test, model_label: str | None = None
) -> ImportanceReport:
    """Exact marginal contribution of each feature to test-fold loss."""
    if isinstance(x_test, FeatureMatrix):
        names = list(x_test.names)
        if artifact.preprocessor is not None and names != artifact.preprocessor.feature_layout:
            raise SchemaMismatchError("feature layout does not match the artifact")
        x = x_test.values
    else:
        x = np.asarray(x_test, dtype=np.float64)
        names = [f"feature_{i}" for i in range(x.shape[1])]
    y = np.asarray(y_test, dtype=np.float64)
    if y.size != x.shape[0]:
        raise PipelineError("y_test length does not match x_test")
    if y.min() == y.max():
        raise UndefinedMetricError("importance undefined for single-class labels")

    label = model_label or f"{artifact.family}/{artifact.task or 'unknown-task'}"
    d = x.shape[1]
    losses = np.empty(d, dtype=np.float64)
    if isinstance(artifact.state, SvmState):
        scorer = _svm_masked_scores(artifact.state, x)
        baseline = _bce(scorer(None), y)
        for col in range(d):
            losses[col] = _bce(scorer(col), y)
    else:
        scorer = _fast_scorer(artifact)
        baseline = _bce(scorer(x), y)
        masked = x.copy()
        for col in range(d):
            saved = masked[:, col].copy()
            masked[:, col] = 0.0
            losses[col] = _bce(scorer(masked), y)
            masked[:, col] = saved

    contributions = np.maximum(losses - baseline, 0.0)
    total = float(contributions.sum())
    if total <= 0.0:
        importances = np.full(d, 1.0 / d)
        return ImportanceReport(
            names, importances, contributions, baseline, label, degenerate=True
        )
    return ImportanceReport(names, contributions / total, contributions, baseline, label)


def grouped_importance(
    report: ImportanceReport, state: PreprocessorState
) -> ImportanceReport:
    """Collapse one-hot blocks to their source feature for presentation.

    Continuous features and their missingness indicators remain separate
    entries; indicators keep the all-caps MISSING suffix. Grouping is
    additive, so the total stays 1.
    """
    if report.names != state.feature_layout:
        raise SchemaMismatchError("report layout does not match preprocessor state")
    grouped_names: list[str] = []
    index_of: dict[str, int] = {}
    importances: list[float] = []
    contributions: list[float] = []
    for spec, imp, contrib in zip(state.layout_spec, report.importances, report.contributions):
        if spec["type"] == "onehot":
            key = spec["source"]
        elif spec["type"] == "value":
            key = spec["source"]
        else:
            key = f"{spec['source']} MISSING"
        if key not in index_of:
            index_of[key] = len(grouped_names)
            grouped_names.append(key)
            importances.append(0.0)
            contributions.append(0.0)
        importances[index_of[key]] += float(imp)
        contributions[index_of[key]] += float(contrib)
    return ImportanceReport(
        names=grouped_names,
        importances=np.asarray(importances),
        contributions=np.asarray(contributions),
        loss_baseline=report.loss_baseline,
        model_label=report.model_label,
        degenerate=report.degenerate,
    )
