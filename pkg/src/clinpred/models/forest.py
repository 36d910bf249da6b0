"""Random forest of gini-split classification trees.

Each tree trains on a bootstrap sample of the rows; each split considers
a fresh random subset of sqrt(n_features) features. Leaves store the
positive fraction of their training rows and the forest score is the
plain mean over trees. Split ties resolve to the first best gain in
feature-index order so training is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..util import rng_for
from .boosting import Tree


@dataclass
class ForestState:
    trees: list[Tree]

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(x.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_margin(x)
        return total / len(self.trees)

    def to_jsonable(self) -> dict:
        return {"model": "forest", "trees": [t.to_jsonable() for t in self.trees]}

    @classmethod
    def from_jsonable(cls, payload: dict) -> "ForestState":
        return cls(trees=[Tree.from_jsonable(t) for t in payload["trees"]])


class _GiniTreeBuilder:
    def __init__(self, x, y, max_depth, n_split_features, tree_seed):
        self.x = x
        self.y = y
        self.max_depth = max_depth
        self.n_split_features = n_split_features
        self.tree_seed = tree_seed
        self.node_counter = 0
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(0)
        self.right.append(0)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray) -> Tree:
        root = self._new_node()
        self._grow(root, rows, depth=0)
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64),
        )

    def _grow(self, node: int, rows: np.ndarray, depth: int):
        labels = self.y[rows]
        positive_fraction = float(labels.mean())
        self.value[node] = positive_fraction
        if (
            depth >= self.max_depth
            or rows.size < 2
            or positive_fraction == 0.0
            or positive_fraction == 1.0
        ):
            return
        split = self._best_split(rows)
        if split is None:
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
        # per-split feature subsample, deterministic per (tree, node)
        rng = rng_for(self.tree_seed, "node", self.node_counter)
        self.node_counter += 1
        n_features = self.x.shape[1]
        chosen = rng.choice(n_features, size=min(self.n_split_features, n_features), replace=False)
        chosen = np.sort(chosen)  # tie-break in feature-index order

        sub = self.x[rows][:, chosen]
        labels = self.y[rows]
        n = rows.size
        order = np.argsort(sub, axis=0, kind="stable")
        sorted_vals = np.take_along_axis(sub, order, axis=0)
        pos_cum = np.cumsum(labels[order], axis=0)
        total_pos = float(labels.sum())

        left_n = np.arange(1, n, dtype=np.float64)[:, None]
        right_n = n - left_n
        left_pos = pos_cum[:-1]
        right_pos = total_pos - left_pos
        p_left = left_pos / left_n
        p_right = right_pos / right_n
        gini_left = 2.0 * p_left * (1.0 - p_left)
        gini_right = 2.0 * p_right * (1.0 - p_right)
        parent_p = total_pos / n
        parent_gini = 2.0 * parent_p * (1.0 - parent_p)
        gain = parent_gini - (left_n / n) * gini_left - (right_n / n) * gini_right
        gain[sorted_vals[:-1] >= sorted_vals[1:]] = -np.inf
        flat = int(np.argmax(gain.T))  # first best in feature-index order
        col, pos = divmod(flat, n - 1)
        if not (gain[pos, col] > 1e-15):
            return None
        feat = int(chosen[col])
        thr = 0.5 * (sorted_vals[pos, col] + sorted_vals[pos + 1, col])
        go_left = self.x[rows, feat] < thr
        return feat, float(thr), rows[go_left], rows[~go_left]


def fit_forest(hp: dict, x: np.ndarray, y: np.ndarray, seed: int) -> ForestState:
    n, d = x.shape
    n_trees = int(hp["n_trees"])
    n_split_features = max(1, int(round(np.sqrt(d))))
    trees = []
    for t in range(n_trees):
        tree_rng = rng_for(seed, "bootstrap", t)
        rows = np.sort(tree_rng.integers(0, n, size=n))
        builder = _GiniTreeBuilder(
            x,
            y,
            max_depth=int(hp["max_depth"]),
            n_split_features=n_split_features,
            tree_seed=(seed, t),
        )
        trees.append(builder.build(rows))
    return ForestState(trees=trees)
