from __future__ import annotations

import numpy as np

from .tree import check_features, encode_labels

VAR_FLOOR = 1e-9


class GaussianNaiveBayes:
    kind = "naive_bayes"

    def fit(self, X, y) -> "GaussianNaiveBayes":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.classes_, enc = encode_labels(y)
        self.n_features_ = X.shape[1]
        k = len(self.classes_)
        self.mean_ = np.stack([X[enc == c].mean(axis=0) for c in range(k)])
        self.var_ = np.maximum(np.stack([X[enc == c].var(axis=0) for c in range(k)]), VAR_FLOOR)
        self.log_prior_ = np.log(np.bincount(enc, minlength=k) / len(X))
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        ll = -0.5 * (np.log(2 * np.pi * self.var_)[None] + (X[:, None, :] - self.mean_[None]) ** 2 / self.var_[None])
        return ll.sum(axis=2) + self.log_prior_[None]

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.joint_log_likelihood(X), axis=1)]

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {}, "classes": self.classes_.tolist(),
                "mean": self.mean_.tolist(), "var": self.var_.tolist(),
                "log_prior": self.log_prior_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNaiveBayes":
        m = cls()
        m.classes_ = np.array(d["classes"])
        m.mean_ = np.array(d["mean"], dtype=float)
        m.var_ = np.array(d["var"], dtype=float)
        m.log_prior_ = np.array(d["log_prior"], dtype=float)
        m.n_features_ = m.mean_.shape[1]
        return m
