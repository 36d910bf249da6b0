"""Evaluation metrics: ROC/PR curves, bootstrap CIs, paired significance.

All metrics operate on a :class:`ScoredSet` (scores + binary labels) and
use the inclusive convention ``predict positive iff score >= threshold``.
Bootstrap resampling is deterministic per (seed, resample index) so that
resamples can be shared across models for paired testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from .errors import PipelineError, UndefinedMetricError

METRIC_NAMES = ("auc", "aupr", "sensitivity", "specificity", "spec_at_95_sens")

_BOOTSTRAP_REDRAW_LIMIT = 1000


@dataclass(frozen=True)
class ScoredSet:
    """Model scores paired with ground-truth binary labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.ndim != 1 or labels.ndim != 1 or scores.shape != labels.shape:
            raise PipelineError("scores and labels must be equal-length vectors")
        if scores.size == 0:
            raise PipelineError("empty scored set")
        if not np.all(np.isfinite(scores)):
            raise PipelineError("scores contain non-finite values")
        if not np.all((labels == 0) | (labels == 1)):
            raise PipelineError("labels must be 0/1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())

    def require_both_classes(self):
        if self.n_pos == 0 or self.n_neg == 0:
            raise UndefinedMetricError(
                "metric undefined: labels contain a single class"
            )


def roc_points(s: ScoredSet) -> np.ndarray:
    """ROC curve as an array of (fpr, tpr, threshold) rows.

    Thresholds are the distinct score values in descending order, preceded
    by ``max(score) + 1`` for the no-positives corner. Tied scores move the
    curve diagonally in one step, which is what makes the trapezoidal area
    count reversals at ties as one half.
    """
    s.require_both_classes()
    order = np.argsort(-s.scores, kind="stable")
    sorted_scores = s.scores[order]
    sorted_labels = s.labels[order]
    # indices where a run of tied scores ends
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.concatenate([distinct, [s.scores.size - 1]])
    tp = np.cumsum(sorted_labels)[ends]
    fp = (ends + 1) - tp
    tpr = tp / s.n_pos
    fpr = fp / s.n_neg
    thresholds = sorted_scores[ends]
    out = np.empty((ends.size + 1, 3), dtype=np.float64)
    out[0] = (0.0, 0.0, sorted_scores[0] + 1.0)
    out[1:, 0] = fpr
    out[1:, 1] = tpr
    out[1:, 2] = thresholds
    return out


def pr_points(s: ScoredSet) -> np.ndarray:
    """Precision-recall curve as an array of (recall, precision, threshold) rows."""
    if s.n_pos == 0:
        raise UndefinedMetricError("precision-recall undefined without positives")
    order = np.argsort(-s.scores, kind="stable")
    sorted_scores = s.scores[order]
    sorted_labels = s.labels[order]
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.concatenate([distinct, [s.scores.size - 1]])
    tp = np.cumsum(sorted_labels)[ends]
    predicted = ends + 1.0
    recall = tp / s.n_pos
    precision = tp / predicted
    out = np.empty((ends.size, 3), dtype=np.float64)
    out[:, 0] = recall
    out[:, 1] = precision
    out[:, 2] = sorted_scores[ends]
    return out


def roc_auc(s: ScoredSet) -> float:
    """Area under the ROC curve; ties count one half.

    Computed with the midrank formula, which equals both the trapezoidal
    ROC integral and the probability that a random positive outscores a
    random negative.
    """
    s.require_both_classes()
    order = np.argsort(s.scores, kind="stable")
    ranks = np.empty(s.scores.size, dtype=np.float64)
    sorted_scores = s.scores[order]
    i = 0
    rank = 1.0
    while i < sorted_scores.size:
        j = i
        while j + 1 < sorted_scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        midrank = (rank + rank + (j - i)) / 2.0
        ranks[order[i : j + 1]] = midrank
        rank += j - i + 1
        i = j + 1
    pos_rank_sum = float(ranks[s.labels == 1].sum())
    n_pos, n_neg = s.n_pos, s.n_neg
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def aupr(s: ScoredSet) -> float:
    """Area under the PR curve with step interpolation (average precision)."""
    pts = pr_points(s)
    recall = pts[:, 0]
    precision = pts[:, 1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def sens_spec_at(threshold: float, s: ScoredSet) -> tuple[float, float]:
    """Sensitivity and specificity when predicting positive at score >= threshold."""
    s.require_both_classes()
    predicted = s.scores >= threshold
    tp = int(np.sum(predicted & (s.labels == 1)))
    tn = int(np.sum(~predicted & (s.labels == 0)))
    return tp / s.n_pos, tn / s.n_neg


def select_operating_threshold(validation: ScoredSet) -> float:
    """Threshold of the ROC point closest to the (FPR=0, TPR=1) corner.

    Ties prefer higher TPR, then lower threshold value.
    """
    pts = roc_points(validation)
    dist = np.sqrt(pts[:, 0] ** 2 + (1.0 - pts[:, 1]) ** 2)
    best = 0
    for i in range(1, pts.shape[0]):
        if dist[i] < dist[best] - 1e-15:
            best = i
        elif abs(dist[i] - dist[best]) <= 1e-15:
            if pts[i, 1] > pts[best, 1] or (
                pts[i, 1] == pts[best, 1] and pts[i, 2] < pts[best, 2]
            ):
                best = i
    return float(pts[best, 2])


def spec_at_95_sens(s: ScoredSet, min_sensitivity: float = 0.95) -> float:
    """Best specificity over thresholds whose sensitivity meets the floor."""
    pts = roc_points(s)
    eligible = pts[:, 1] >= min_sensitivity - 1e-12
    if not np.any(eligible):
        raise UndefinedMetricError("no threshold reaches the sensitivity floor")
    return float(np.max(1.0 - pts[eligible, 0]))


def compute_metric(name: str, s: ScoredSet, threshold: float | None = None) -> float:
    """Dispatch a named metric; threshold-based ones need `threshold`."""
    if name == "auc":
        return roc_auc(s)
    if name == "aupr":
        return aupr(s)
    if name == "spec_at_95_sens":
        return spec_at_95_sens(s)
    if name in ("sensitivity", "specificity"):
        if threshold is None:
            raise PipelineError(f"metric {name} requires an operating threshold")
        sens, spec = sens_spec_at(threshold, s)
        return sens if name == "sensitivity" else spec
    raise PipelineError(f"unknown metric {name!r}")


def bootstrap_index_sets(labels: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Row-resample index matrix (n x N), deterministic per (seed, index).

    Resamples containing a single class are redrawn from the same
    per-resample stream (up to a fixed attempt limit), so the matrix
    depends only on the labels, never on any model's scores. Sharing it
    across models is what pairs the per-resample metrics for t-tests.
    """
    from .util import rng_for

    labels = np.asarray(labels)
    size = labels.size
    out = np.empty((n, size), dtype=np.int64)
    for i in range(n):
        rng = rng_for(seed, "bootstrap-resample", i)
        for attempt in range(_BOOTSTRAP_REDRAW_LIMIT):
            idx = rng.integers(0, size, size=size)
            drawn = labels[idx]
            if drawn.min() != drawn.max():
                out[i] = idx
                break
        else:
            raise PipelineError(
                "degenerate bootstrap: could not draw a two-class resample "
                f"after {_BOOTSTRAP_REDRAW_LIMIT} attempts"
            )
    return out


def metric_samples(
    s: ScoredSet,
    index_sets: np.ndarray,
    threshold: float | None = None,
    names: tuple[str, ...] = METRIC_NAMES,
) -> dict[str, np.ndarray]:
    """Metric value per bootstrap resample, for each named metric."""
    out = {name: np.empty(index_sets.shape[0]) for name in names}
    for i, idx in enumerate(index_sets):
        sub = ScoredSet(s.scores[idx], s.labels[idx])
        for name in names:
            out[name][i] = compute_metric(name, sub, threshold)
    return out


def bootstrap_ci(
    s: ScoredSet,
    metric,
    n: int = 100,
    seed: int = 0,
) -> tuple[float, float, np.ndarray]:
    """Percentile 95% CI of a metric over n row-resamples with replacement.

    `metric` is a metric name or a callable taking a ScoredSet.
    """
    s.require_both_classes()
    index_sets = bootstrap_index_sets(s.labels, n, seed)
    samples = np.empty(n)
    for i, idx in enumerate(index_sets):
        sub = ScoredSet(s.scores[idx], s.labels[idx])
        samples[i] = metric(sub) if callable(metric) else compute_metric(metric, sub)
    low, high = np.percentile(samples, [2.5, 97.5])
    return float(low), float(high), samples


@dataclass
class SignificanceResult:
    p_value: float
    significant: bool
    degenerate: bool = False


def pairwise_significance(
    best_samples: np.ndarray,
    other_samples: np.ndarray,
    alpha: float = 0.05,
) -> SignificanceResult:
    """Paired two-sided t-test on per-resample metric differences.

    Pairs are matched on shared bootstrap resample indices. Zero-variance
    differences fall back to the limit convention: p = 1 when the mean
    difference is 0, else p = 0.
    """
    best_samples = np.asarray(best_samples, dtype=np.float64)
    other_samples = np.asarray(other_samples, dtype=np.float64)
    if best_samples.shape != other_samples.shape or best_samples.ndim != 1:
        raise PipelineError("significance requires equal-length sample vectors")
    diffs = best_samples - other_samples
    n = diffs.size
    if n < 2 or np.all(diffs == diffs[0]):
        p = 1.0 if diffs[0] == 0.0 else 0.0
        return SignificanceResult(p, p < alpha, degenerate=True)
    sd = float(np.std(diffs, ddof=1))
    t_stat = float(np.mean(diffs)) / (sd / np.sqrt(n))
    p = 2.0 * float(scipy_stats.t.sf(abs(t_stat), df=n - 1))
    return SignificanceResult(p, p < alpha)


@dataclass
class EvalReport:
    """Full Table-style evaluation of one model on one scored set."""

    point: dict[str, float]
    ci_low: dict[str, float]
    ci_high: dict[str, float]
    roc: np.ndarray
    pr: np.ndarray
    operating_threshold: float
    bootstrap_samples: dict[str, np.ndarray]
    significance: dict[str, dict[str, SignificanceResult]] = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "operating_threshold": self.operating_threshold,
            "roc_points": self.roc.tolist(),
            "pr_points": self.pr.tolist(),
            "bootstrap_samples": {k: v.tolist() for k, v in self.bootstrap_samples.items()},
            "significance": {
                other: {
                    m: {
                        "p_value": r.p_value,
                        "significant": r.significant,
                        "degenerate": r.degenerate,
                    }
                    for m, r in per_metric.items()
                }
                for other, per_metric in self.significance.items()
            },
        }


def evaluate_scores(
    test: ScoredSet,
    operating_threshold: float,
    index_sets: np.ndarray,
) -> EvalReport:
    """Point estimates, bootstrap CIs and curves for one model's test scores."""
    test.require_both_classes()
    point = {name: compute_metric(name, test, operating_threshold) for name in METRIC_NAMES}
    samples = metric_samples(test, index_sets, operating_threshold)
    ci_low = {}
    ci_high = {}
    for name in METRIC_NAMES:
        low, high = np.percentile(samples[name], [2.5, 97.5])
        ci_low[name] = float(low)
        ci_high[name] = float(high)
    return EvalReport(
        point=point,
        ci_low=ci_low,
        ci_high=ci_high,
        roc=roc_points(test),
        pr=pr_points(test),
        operating_threshold=operating_threshold,
        bootstrap_samples=samples,
    )
