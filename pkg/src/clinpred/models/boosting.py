"""Gradient-boosted regression trees on logistic loss.

Second-order boosting: each round fits a depth-limited tree to the
gradient/hessian statistics of the logistic loss, with exact greedy split
search over sorted unique feature values (the cohorts are small enough
that histogram approximations buy nothing). Regularization follows the
usual formulation: L1 soft-thresholding of the gradient sum, L2 on the
hessian sum, a minimum split gain, and per-round row subsampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from ..util import sigmoid

MIN_CHILD_WEIGHT = 1.0


@dataclass
class Tree:
    feature: np.ndarray  # int, -1 for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf weight (already scaled by learning rate)

    def predict_margin(self, x: np.ndarray) -> np.ndarray:
        idx = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not np.any(active):
                break
            rows = np.nonzero(active)[0]
            go_left = x[rows, feat[rows]] < self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
        return self.value[idx]

    def to_jsonable(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "Tree":
        return cls(
            np.asarray(payload["feature"], dtype=np.int64),
            np.asarray(payload["threshold"], dtype=np.float64),
            np.asarray(payload["left"], dtype=np.int64),
            np.asarray(payload["right"], dtype=np.int64),
            np.asarray(payload["value"], dtype=np.float64),
        )


@dataclass
class BoostedTreesState:
    trees: list[Tree]
    base_margin: float = 0.0

    def predict_margin(self, x: np.ndarray) -> np.ndarray:
        margin = np.full(x.shape[0], self.base_margin, dtype=np.float64)
        for tree in self.trees:
            margin += tree.predict_margin(x)
        return margin

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.predict_margin(x))

    def to_jsonable(self) -> dict:
        return {
            "model": "boosted_trees",
            "base_margin": self.base_margin,
            "trees": [t.to_jsonable() for t in self.trees],
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "BoostedTreesState":
        return cls(
            trees=[Tree.from_jsonable(t) for t in payload["trees"]],
            base_margin=payload["base_margin"],
        )


def _soft_threshold(g, l1: float):
    return np.sign(g) * np.maximum(np.abs(g) - l1, 0.0)


def _leaf_weight(g_sum: float, h_sum: float, l1: float, l2: float) -> float:
    return float(-_soft_threshold(g_sum, l1) / (h_sum + l2))


def _node_score(g_sum, h_sum, l1, l2):
    t = _soft_threshold(g_sum, l1)
    return t * t / (h_sum + l2)


class _TreeBuilder:
    """Grows one tree with exact greedy splits, vectorized across features."""

    def __init__(self, x, g, h, max_depth, gamma, l1, l2, learning_rate):
        self.x = x
        self.g = g
        self.h = h
        self.max_depth = max_depth
        self.gamma = gamma
        self.l1 = l1
        self.l2 = l2
        self.learning_rate = learning_rate
        self.feature = [0]
        self.threshold = [0.0]
        self.left = [0]
        self.right = [0]
        self.value = [0.0]

    def _new_node(self) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.left.append(0)
        self.right.append(0)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray) -> "Tree":
        self._grow(0, rows, depth=0)
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64),
        )

    def _make_leaf(self, node: int, rows: np.ndarray):
        g_sum = float(self.g[rows].sum())
        h_sum = float(self.h[rows].sum())
        self.feature[node] = -1
        self.value[node] = self.learning_rate * _leaf_weight(g_sum, h_sum, self.l1, self.l2)

    def _grow(self, node: int, rows: np.ndarray, depth: int):
        if depth >= self.max_depth or rows.size < 2:
            self._make_leaf(node, rows)
            return
        split = self._best_split(rows)
        if split is None:
            self._make_leaf(node, rows)
            return
        feat, thr, left_rows, right_rows = split
        left_id = self._new_node()
        right_id = self._new_node()
        self.feature[node] = feat
        self.threshold[node] = thr
        self.left[node] = left_id
        self.right[node] = right_id
        self._grow(left_id, left_rows, depth + 1)
        self._grow(right_id, right_rows, depth + 1)

    def _best_split(self, rows: np.ndarray):
        sub = self.x[rows]
        g = self.g[rows]
        h = self.h[rows]
        n = rows.size
        order = np.argsort(sub, axis=0, kind="stable")
        sorted_vals = np.take_along_axis(sub, order, axis=0)
        g_cum = np.cumsum(g[order], axis=0)
        h_cum = np.cumsum(h[order], axis=0)
        g_total = float(g.sum())
        h_total = float(h.sum())

        # candidate split after position i (0-based): left = rows 0..i
        gl = g_cum[:-1]
        hl = h_cum[:-1]
        gr = g_total - gl
        hr = h_total - hl
        valid = sorted_vals[:-1] < sorted_vals[1:]
        valid &= (hl >= MIN_CHILD_WEIGHT) & (hr >= MIN_CHILD_WEIGHT)
        if not np.any(valid):
            return None
        parent = _node_score(g_total, h_total, self.l1, self.l2)
        gain = 0.5 * (
            _node_score(gl, hl, self.l1, self.l2)
            + _node_score(gr, hr, self.l1, self.l2)
            - parent
        ) - self.gamma
        gain[~valid] = -np.inf
        flat = int(np.argmax(gain.T))  # feature-major: ties break on lower feature index
        best_feat, best_pos = divmod(flat, n - 1)
        best_gain = gain[best_pos, best_feat]
        if not (best_gain > 0.0):
            return None
        thr = 0.5 * (sorted_vals[best_pos, best_feat] + sorted_vals[best_pos + 1, best_feat])
        go_left = sub[:, best_feat] < thr
        return best_feat, float(thr), rows[go_left], rows[~go_left]


def fit_boosted_trees(hp: dict, x: np.ndarray, y: np.ndarray, seed: int) -> BoostedTreesState:
    n = x.shape[0]
    n_rounds = int(hp["n_rounds"])
    subsample = float(hp["subsample"])
    rng = np.random.default_rng(seed)
    margin = np.zeros(n, dtype=np.float64)
    trees: list[Tree] = []
    for round_idx in range(n_rounds):
        p = sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        if subsample < 1.0:
            size = max(1, int(round(subsample * n)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = np.arange(n)
        builder = _TreeBuilder(
            x,
            g,
            h,
            max_depth=int(hp["max_depth"]),
            gamma=float(hp["min_split_loss"]),
            l1=float(hp["l1"]),
            l2=float(hp["l2"]),
            learning_rate=float(hp["learning_rate"]),
        )
        tree = builder.build(rows)
        trees.append(tree)
        margin += tree.predict_margin(x)
        if not np.all(np.isfinite(margin)):
            raise TrainingDivergedError("non-finite margin during boosting", round_idx)
    return BoostedTreesState(trees=trees)
