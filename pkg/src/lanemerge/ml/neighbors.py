from __future__ import annotations

import numpy as np

from .preprocessing import Standardizer
from .tree import check_features, encode_labels


class KNearestNeighbors:
    """Majority vote among the k nearest standardized training points.

    Distance ties go to the lower training index, vote ties to the lower class.
    """

    kind = "knn"

    def __init__(self, k_neighbors: int = 50, chunk: int = 64):
        if k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        self.k_neighbors = k_neighbors
        self.chunk = chunk

    def fit(self, X, y) -> "KNearestNeighbors":
        X = np.asarray(X, dtype=float)
        if self.k_neighbors > len(X):
            raise ValueError(f"k={self.k_neighbors} exceeds training size {len(X)}")
        self.scaler_ = Standardizer().fit(X)
        self.X_ = self.scaler_.transform(X)
        self.classes_, self.y_ = encode_labels(y)
        self.n_features_ = X.shape[1]
        return self

    def kneighbors(self, X, k: int | None = None) -> np.ndarray:
        """Indices of the ``k`` nearest training points per query, nearest first."""
        k = self.k_neighbors if k is None else k
        Q = self.scaler_.transform(check_features(X, self.n_features_))
        out = np.empty((len(Q), k), dtype=np.intp)
        for start in range(0, len(Q), self.chunk):
            q = Q[start:start + self.chunk]
            d = ((q[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=-1)
            out[start:start + len(q)] = np.argsort(d, axis=1, kind="stable")[:, :k]
        return out

    def vote(self, neighbours: np.ndarray) -> np.ndarray:
        labels = self.y_[neighbours]
        counts = np.stack([(labels == c).sum(axis=1) for c in range(len(self.classes_))], axis=1)
        return self.classes_[np.argmax(counts, axis=1)]

    def predict(self, X) -> np.ndarray:
        return self.vote(self.kneighbors(X))

    def params(self) -> dict:
        return {"k_neighbors": self.k_neighbors}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "scaler": self.scaler_.to_dict(),
                "X": self.X_.tolist(), "y": self.y_.tolist(), "classes": self.classes_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KNearestNeighbors":
        m = cls(**d["params"])
        m.scaler_ = Standardizer.from_dict(d["scaler"])
        m.X_ = np.array(d["X"], dtype=float)
        m.y_ = np.array(d["y"], dtype=np.intp)
        m.classes_ = np.array(d["classes"])
        m.n_features_ = m.X_.shape[1]
        return m
