"""CART trees: greedy Gini (classification) or variance-reduction (regression) splits."""

from __future__ import annotations

import numpy as np


def encode_labels(y) -> tuple[np.ndarray, np.ndarray]:
    classes, enc = np.unique(np.asarray(y), return_inverse=True)
    return classes, enc.astype(np.intp)


def check_features(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got shape {X.shape}")
    return X


class DecisionTree:
    """Binary decision tree stored as flat node arrays.

    ``max_depth=None`` grows until leaves are pure; ``max_depth=0`` is a
    constant predictor.  With ``max_features`` below the feature count a
    random subset is drawn per node from ``seed``.
    """

    kind = "decision_tree"

    def __init__(self, task: str = "classify", max_depth: int | None = None,
                 max_features: int | None = None, min_samples_split: int = 2, seed: int = 0):
        if task not in ("classify", "regress"):
            raise ValueError(f"unknown task {task!r}")
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        self.task = task
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.seed = seed

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.n_features_ = X.shape[1]
        if self.task == "classify":
            self.classes_, enc = encode_labels(y)
            target = np.eye(len(self.classes_))[enc]
        else:
            self.classes_ = None
            target = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)

        feature, threshold, left, right, value, depth_of = [], [], [], [], [], []

        def new_node(idx, depth):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            t = target[idx]
            value.append(t.mean(axis=0))
            depth_of.append(depth)
            return len(feature) - 1

        stack = [(new_node(np.arange(len(X)), 0), np.arange(len(X)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            if len(idx) < self.min_samples_split or self._pure(target[idx]):
                continue
            split = self._best_split(X, target, idx, rng)
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            ln = new_node(li, depth + 1)
            rn = new_node(ri, depth + 1)
            left[node], right[node] = ln, rn
            # right pushed first so the left subtree is numbered first
            stack.append((rn, ri, depth + 1))
            stack.append((ln, li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.intp)
        self.threshold_ = np.array(threshold, dtype=float)
        self.left_ = np.array(left, dtype=np.intp)
        self.right_ = np.array(right, dtype=np.intp)
        self.value_ = np.array(value, dtype=float)
        self.depth_ = int(max(depth_of))
        return self

    @staticmethod
    def _pure(t: np.ndarray) -> bool:
        return bool(np.all(t == t[0]))

    def _candidates(self, rng) -> np.ndarray:
        n = self.n_features_
        k = self.max_features
        if k is None or k >= n:
            return np.arange(n)
        return np.sort(rng.choice(n, size=k, replace=False))

    def _best_split(self, X, target, idx, rng):
        feats = self._candidates(rng)
        found = self._search(X, target, idx, feats)
        if found is None and len(feats) < self.n_features_:
            rest = np.setdiff1d(np.arange(self.n_features_), feats)
            found = self._search(X, target, idx, rest)
        return found

    def _search(self, X, target, idx, feats):
        n = len(idx)
        Xn = X[np.ix_(idx, feats)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        valid = xs[1:] != xs[:-1]
        if not valid.any():
            return None
        nl = np.arange(1, n, dtype=float)[:, None]
        nr = n - nl
        t = target[idx]
        if t.ndim == 2:
            # Gini: maximise sum_k cl_k^2/nl + cr_k^2/nr
            ts = t[order]                      # (n, F, K)
            cl = np.cumsum(ts, axis=0)[:-1]
            cr = t.sum(axis=0) - cl
            score = (cl ** 2).sum(axis=-1) / nl + (cr ** 2).sum(axis=-1) / nr
        else:
            ts = t[order]                      # (n, F)
            sl = np.cumsum(ts, axis=0)[:-1]
            sr = t.sum() - sl
            score = sl ** 2 / nl + sr ** 2 / nr
        score = np.where(valid, score, -np.inf)
        pos, j = np.unravel_index(int(np.argmax(score)), score.shape)
        a, b = xs[pos, j], xs[pos + 1, j]
        thr = (a + b) / 2.0
        if thr == b:
            thr = a
        return int(feats[j]), float(thr)

    # -- inference ---------------------------------------------------------

    def apply(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature_[node]
            inner = f >= 0
            if not inner.any():
                return node
            fv = X[rows, np.where(inner, f, 0)]
            nxt = np.where(fv <= self.threshold_[node], self.left_[node], self.right_[node])
            node = np.where(inner, nxt, node)

    def predict_value(self, X) -> np.ndarray:
        return self.value_[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        v = self.predict_value(X)
        if self.task == "classify":
            return self.classes_[np.argmax(v, axis=1)]
        return v

    @property
    def n_nodes(self) -> int:
        return len(self.feature_)

    def params(self) -> dict:
        return {"task": self.task, "max_depth": self.max_depth, "max_features": self.max_features,
                "min_samples_split": self.min_samples_split, "seed": self.seed}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": self.params(), "n_features": self.n_features_,
            "classes": None if self.classes_ is None else self.classes_.tolist(),
            "feature": self.feature_.tolist(), "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(), "right": self.right_.tolist(),
            "value": self.value_.tolist(), "depth": self.depth_,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        t = cls(**d["params"])
        t.n_features_ = d["n_features"]
        t.classes_ = None if d["classes"] is None else np.array(d["classes"])
        t.feature_ = np.array(d["feature"], dtype=np.intp)
        t.threshold_ = np.array(d["threshold"], dtype=float)
        t.left_ = np.array(d["left"], dtype=np.intp)
        t.right_ = np.array(d["right"], dtype=np.intp)
        t.value_ = np.array(d["value"], dtype=float)
        t.depth_ = d["depth"]
        return t


class TreeStack:
    """Several trees concatenated so one vectorised walk evaluates all of them."""

    def __init__(self, trees: list[DecisionTree]):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
        self.roots = offsets.astype(np.intp)
        self.feature = np.concatenate([t.feature_ for t in trees])
        self.threshold = np.concatenate([t.threshold_ for t in trees])
        self.left = np.concatenate([np.where(t.left_ >= 0, t.left_ + o, -1) for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.right_ >= 0, t.right_ + o, -1) for t, o in zip(trees, offsets)])
        self.value = np.concatenate([t.value_ for t in trees])
        self.n_features = trees[0].n_features_

    def leaf_values(self, X) -> np.ndarray:
        """Leaf values with shape (n_samples, n_trees[, n_classes])."""
        X = check_features(X, self.n_features)
        node = np.tile(self.roots, (len(X), 1))
        rows = np.arange(len(X))[:, None]
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            fv = X[rows, np.where(inner, f, 0)]
            nxt = np.where(fv <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(inner, nxt, node)
