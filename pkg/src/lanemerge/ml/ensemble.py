"""Random forests and stagewise gradient boosting on top of :class:`DecisionTree`."""

from __future__ import annotations

import math

import numpy as np

from .tree import DecisionTree, TreeStack, check_features, encode_labels


class RandomForest:
    kind = "random_forest"

    def __init__(self, task: str = "classify", n_estimators: int = 100, max_depth: int | None = None,
                 max_features: int | str | None = "auto", bootstrap: bool = True, seed: int = 0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.task = task
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def _n_features(self, n: int) -> int:
        if self.max_features is None:
            return n
        if self.max_features == "auto":
            k = int(math.sqrt(n)) if self.task == "classify" else n // 3
            return max(1, k)
        return int(self.max_features)

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        n = len(X)
        if n == 0:
            raise ValueError("empty training set")
        self.n_features_ = X.shape[1]
        if self.task == "classify":
            self.classes_, enc = encode_labels(y)
            y_fit = self.classes_[enc]
        else:
            self.classes_ = None
            y_fit = y.astype(float)
        rng = np.random.default_rng(self.seed)
        k = self._n_features(X.shape[1])
        self.trees_ = []
        for _ in range(self.n_estimators):
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree_seed = int(rng.integers(2 ** 31))
            tree = DecisionTree(self.task, self.max_depth, max_features=k, seed=tree_seed)
            tree.fit(X[rows], y_fit[rows])
            if self.task == "classify" and len(tree.classes_) < len(self.classes_):
                # bootstrap missed a class: widen leaf distributions to the forest's classes
                cols = np.searchsorted(self.classes_, tree.classes_)
                wide = np.zeros((tree.n_nodes, len(self.classes_)))
                wide[:, cols] = tree.value_
                tree.value_, tree.classes_ = wide, self.classes_
            self.trees_.append(tree)
        self._stack = None
        return self

    @property
    def stack(self) -> TreeStack:
        if getattr(self, "_stack", None) is None:
            self._stack = TreeStack(self.trees_)
        return self._stack

    def predict(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        leaves = self.stack.leaf_values(X)
        if self.task == "regress":
            return leaves.mean(axis=1)
        # hard majority vote; ties go to the lower class
        winners = np.argmax(leaves, axis=2)
        votes = np.stack([(winners == c).sum(axis=1) for c in range(len(self.classes_))], axis=1)
        return self.classes_[np.argmax(votes, axis=1)]

    @property
    def depth_(self) -> int:
        return max(t.depth_ for t in self.trees_)

    def params(self) -> dict:
        return {"task": self.task, "n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "max_features": self.max_features, "bootstrap": self.bootstrap, "seed": self.seed}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "n_features": self.n_features_,
                "classes": None if self.classes_ is None else self.classes_.tolist(),
                "trees": [t.to_dict() for t in self.trees_]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        m = cls(**d["params"])
        m.n_features_ = d["n_features"]
        m.classes_ = None if d["classes"] is None else np.array(d["classes"])
        m.trees_ = [DecisionTree.from_dict(t) for t in d["trees"]]
        m._stack = None
        return m


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _logloss(y01, F):
    # log(1 + exp(-F)) for y=1, log(1 + exp(F)) for y=0
    return np.logaddexp(0.0, np.where(y01 == 1, -F, F))


class GradientBoosting:
    """Least-squares boosting for regression, binomial deviance for binary
    classification.  The learning rate is folded into each tree's leaf values,
    and classification leaves take a damped Newton step that never raises the
    training loss of the samples in that leaf."""

    kind = "gradient_boosting"

    def __init__(self, task: str = "regress", n_estimators: int = 100, max_depth: int = 3,
                 learning_rate: float = 0.1, seed: int = 0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        self.task = task
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y) -> "GradientBoosting":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.n_features_ = X.shape[1]
        rng = np.random.default_rng(self.seed)
        if self.task == "classify":
            self.classes_, enc = encode_labels(y)
            if len(self.classes_) > 2:
                raise ValueError("gradient boosting supports binary classification only")
            yt = enc.astype(float)
            p = np.clip(yt.mean(), 1e-12, 1 - 1e-12)
            self.init_ = float(np.log(p / (1 - p))) if len(self.classes_) == 2 else 0.0
        else:
            self.classes_ = None
            yt = np.asarray(y, dtype=float)
            self.init_ = float(yt.mean())

        F = np.full(len(X), self.init_)
        self.trees_ = []
        self.train_loss_ = [self._loss(yt, F)]
        for _ in range(self.n_estimators):
            if self.task == "classify":
                resid = yt - _sigmoid(F)
            else:
                resid = yt - F
            tree = DecisionTree("regress", self.max_depth, seed=int(rng.integers(2 ** 31))).fit(X, resid)
            leaf = tree.apply(X)
            values = tree.value_.copy()
            for node in np.unique(leaf):
                members = leaf == node
                values[node] = self._leaf_step(yt[members], F[members], resid[members])
            tree.value_ = values
            F = F + values[leaf]
            self.trees_.append(tree)
            self.train_loss_.append(self._loss(yt, F))
        self._stack = None
        return self

    def _loss(self, y, F) -> float:
        if self.task == "classify":
            return float(_logloss(y, F).mean())
        return float(((y - F) ** 2).mean())

    def _leaf_step(self, y, F, resid) -> float:
        if self.task == "regress":
            return self.learning_rate * float(resid.mean())
        p = _sigmoid(F)
        hess = float((p * (1 - p)).sum())
        step = self.learning_rate * float(resid.sum()) / max(hess, 1e-12)
        before = _logloss(y, F).sum()
        for _ in range(40):
            if _logloss(y, F + step).sum() <= before:
                return step
            step *= 0.5
        return 0.0

    @property
    def stack(self) -> TreeStack:
        if getattr(self, "_stack", None) is None:
            self._stack = TreeStack(self.trees_)
        return self._stack

    def decision_function(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        return self.init_ + self.stack.leaf_values(X).sum(axis=1)

    def predict(self, X) -> np.ndarray:
        F = self.decision_function(X)
        if self.task == "classify":
            if len(self.classes_) == 1:
                return np.repeat(self.classes_, len(F))
            return self.classes_[(F > 0).astype(np.intp)]
        return F

    @property
    def depth_(self) -> int:
        return max(t.depth_ for t in self.trees_)

    def params(self) -> dict:
        return {"task": self.task, "n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "seed": self.seed}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "n_features": self.n_features_,
                "classes": None if self.classes_ is None else self.classes_.tolist(),
                "init": self.init_, "train_loss": self.train_loss_,
                "trees": [t.to_dict() for t in self.trees_]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoosting":
        m = cls(**d["params"])
        m.n_features_ = d["n_features"]
        m.classes_ = None if d["classes"] is None else np.array(d["classes"])
        m.init_ = d["init"]
        m.train_loss_ = d["train_loss"]
        m.trees_ = [DecisionTree.from_dict(t) for t in d["trees"]]
        m._stack = None
        return m
