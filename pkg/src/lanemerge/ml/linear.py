"""Linear learners on standardized features.

``least-squares``   normal equations, ridge 1e-8 when the system is ill-conditioned
``logistic``        full-batch gradient descent on L2-regularised log loss
``hinge``           epoch SGD on L2-regularised hinge loss (linear SVC)
``sgd-logistic``    epoch SGD on L2-regularised log loss
``perceptron``      mistake-driven updates, in sample order
"""

from __future__ import annotations

import logging

import numpy as np

from .preprocessing import Standardizer
from .tree import check_features, encode_labels

log = logging.getLogger(__name__)

VARIANTS = ("least-squares", "logistic", "hinge", "perceptron", "sgd-logistic")
RIDGE = 1e-8


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LinearModel:
    kind = "linear"

    def __init__(self, variant: str = "logistic", seed: int = 0, epochs: int = 20,
                 alpha: float = 1e-4, eta0: float = 0.1, tol: float = 1e-6, max_iter: int = 20000,
                 max_epochs: int = 50):
        if variant not in VARIANTS:
            raise ValueError(f"unknown linear variant {variant!r}")
        self.variant = variant
        self.seed = seed
        self.epochs = epochs
        self.alpha = alpha
        self.eta0 = eta0
        self.tol = tol
        self.max_iter = max_iter
        self.max_epochs = max_epochs

    @property
    def task(self) -> str:
        return "regress" if self.variant == "least-squares" else "classify"

    def fit(self, X, y) -> "LinearModel":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.n_features_ = X.shape[1]
        self.scaler_ = Standardizer().fit(X)
        A = np.hstack([self.scaler_.transform(X), np.ones((len(X), 1))])
        if self.task == "regress":
            self.classes_ = None
            self.coef_ = self._least_squares(A, np.asarray(y, dtype=float))
            return self
        self.classes_, enc = encode_labels(y)
        if len(self.classes_) > 2:
            raise ValueError("linear classifiers here are binary")
        if len(self.classes_) == 1:
            self.coef_ = np.zeros(A.shape[1])
            return self
        fit = {"logistic": self._logistic, "hinge": self._sgd, "sgd-logistic": self._sgd,
               "perceptron": self._perceptron}[self.variant]
        self.coef_ = fit(A, enc)
        return self

    def _least_squares(self, A, y):
        G = A.T @ A
        if not np.isfinite(np.linalg.cond(G)) or np.linalg.cond(G) > 1e12:
            G = G + RIDGE * np.eye(len(G))
        return np.linalg.solve(G, A.T @ y)

    def _logistic(self, A, y01):
        n = len(A)
        lam = 1.0 / n  # matches C=1 on the summed loss
        mask = np.ones(A.shape[1])
        mask[-1] = 0.0  # intercept unpenalised
        L = 0.25 * np.linalg.norm(A, 2) ** 2 / n + lam
        w = np.zeros(A.shape[1])
        for it in range(self.max_iter):
            g = A.T @ (_sigmoid(A @ w) - y01) / n + lam * mask * w
            if np.linalg.norm(g) <= self.tol:
                break
            w -= g / L
        else:
            log.warning("logistic regression stopped at max_iter=%d (|grad|=%.2e)",
                        self.max_iter, np.linalg.norm(g))
        self.n_iter_ = it
        return w

    def _sgd(self, A, y01):
        rng = np.random.default_rng(self.seed)
        ys = np.where(y01 == 1, 1.0, -1.0)
        w = np.zeros(A.shape[1])
        t = 0
        for _ in range(self.epochs):
            for i in rng.permutation(len(A)):
                eta = self.eta0 / (1.0 + self.eta0 * self.alpha * t)
                a = A[i]
                z = a @ w
                decay = 1.0 - eta * self.alpha
                b = w[-1]
                w *= decay
                w[-1] = b
                if self.variant == "hinge":
                    if ys[i] * z < 1.0:
                        w += eta * ys[i] * a
                else:
                    w += eta * (y01[i] - _sigmoid(z)) * a
                t += 1
        return w

    def _perceptron(self, A, y01):
        ys = np.where(y01 == 1, 1.0, -1.0)
        w = np.zeros(A.shape[1])
        self.n_mistakes_ = 0
        for _ in range(self.max_epochs):
            mistakes = 0
            for a, yi in zip(A, ys):
                if yi * (a @ w) <= 0:
                    w += yi * a
                    mistakes += 1
            self.n_mistakes_ += mistakes
            if mistakes == 0:
                break
        return w

    def decision_function(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        return self.scaler_.transform(X) @ self.coef_[:-1] + self.coef_[-1]

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        if self.task == "regress":
            return z
        if len(self.classes_) == 1:
            return np.repeat(self.classes_, len(z))
        return self.classes_[(z > 0).astype(np.intp)]

    def params(self) -> dict:
        return {"variant": self.variant, "seed": self.seed, "epochs": self.epochs, "alpha": self.alpha,
                "eta0": self.eta0, "tol": self.tol, "max_iter": self.max_iter, "max_epochs": self.max_epochs}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "scaler": self.scaler_.to_dict(),
                "coef": self.coef_.tolist(),
                "classes": None if self.classes_ is None else self.classes_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        m = cls(**d["params"])
        m.scaler_ = Standardizer.from_dict(d["scaler"])
        m.coef_ = np.array(d["coef"], dtype=float)
        m.classes_ = None if d["classes"] is None else np.array(d["classes"])
        m.n_features_ = len(m.coef_) - 1
        return m
