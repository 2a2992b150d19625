"""Algorithm registry, tuned hyperparameters, and the model bundle file."""

from __future__ import annotations

import gzip
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bayes import GaussianNaiveBayes
from .ensemble import GradientBoosting, RandomForest
from .linear import LinearModel
from .neighbors import KNearestNeighbors
from .preprocessing import Standardizer
from .tree import DecisionTree, check_features

BUNDLE_FORMAT = "lanemerge.model-bundle"
BUNDLE_VERSION = 1
TASKS = ("merge", "accel", "heading")


@dataclass(frozen=True)
class Hyperparameters:
    max_depth: int | None = None
    n_estimators: int = 100
    k_neighbors: int = 50
    learning_rate: float = 0.1
    seed: int = 42

    def __post_init__(self):
        for name in ("n_estimators", "k_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


class ConstantModel:
    kind = "constant"

    def __init__(self, value=None, n_features: int | None = None):
        self.value = value
        self.n_features_ = n_features

    def fit(self, X, y) -> "ConstantModel":
        y = np.asarray(y)
        self.n_features_ = np.asarray(X).shape[1]
        if y.dtype == bool or y.dtype.kind in "OUS":
            vals, counts = np.unique(y, return_counts=True)
            self.value = vals[np.argmax(counts)].item()
        else:
            self.value = float(y.mean())
        return self

    def predict(self, X) -> np.ndarray:
        X = check_features(X, self.n_features_)
        return np.full(len(X), self.value)

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {}, "value": self.value, "n_features": self.n_features_}

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantModel":
        return cls(d["value"], d["n_features"])


# name -> (display name, tasks it serves)
ALGORITHMS = {
    "random_forest": ("Random Forest", {"merge", "accel", "heading"}),
    "knn": ("K-Nearest Neighbours", {"merge"}),
    "decision_tree": ("Decision Tree", {"merge", "accel", "heading"}),
    "gradient_boosting": ("Gradient Boosting", {"merge", "accel", "heading"}),
    "sgd": ("Stochastic Gradient Decent", {"merge"}),
    "logistic_regression": ("Logistic Regression", {"merge"}),
    "linear_svc": ("Linear SVC", {"merge"}),
    "naive_bayes": ("Naive Bayes", {"merge"}),
    "perceptron": ("Perceptron", {"merge"}),
    "linear_regression": ("Linear Regression", {"accel", "heading"}),
}
MERGE_ALGORITHMS = ("random_forest", "knn", "decision_tree", "gradient_boosting", "sgd",
                    "logistic_regression", "linear_svc", "naive_bayes", "perceptron")
REGRESSION_ALGORITHMS = ("random_forest", "gradient_boosting", "linear_regression")

# depths/estimators/K picked by the validation sweeps; merge boosting depth defaults to 3
TUNED_HYPERPARAMETERS = {
    ("merge", "random_forest"): Hyperparameters(max_depth=16, n_estimators=100),
    ("merge", "decision_tree"): Hyperparameters(max_depth=11),
    ("merge", "knn"): Hyperparameters(k_neighbors=50),
    ("merge", "gradient_boosting"): Hyperparameters(max_depth=3, n_estimators=100),
    ("accel", "gradient_boosting"): Hyperparameters(max_depth=11, n_estimators=100),
    ("accel", "random_forest"): Hyperparameters(max_depth=18, n_estimators=100),
    ("heading", "gradient_boosting"): Hyperparameters(max_depth=6, n_estimators=100),
    ("heading", "random_forest"): Hyperparameters(max_depth=11, n_estimators=100),
}
DEFAULT_ALGORITHM = {"merge": "random_forest", "accel": "gradient_boosting", "heading": "gradient_boosting"}


def tuned_hyperparameters(task: str, algorithm: str, seed: int = 42) -> Hyperparameters:
    return replace(TUNED_HYPERPARAMETERS.get((task, algorithm), Hyperparameters()), seed=seed)


def make_model(algorithm: str, task: str, hp: Hyperparameters = Hyperparameters()):
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if task not in ALGORITHMS[algorithm][1]:
        raise ValueError(f"{algorithm} is not used for the {task} task")
    kind = "classify" if task == "merge" else "regress"
    if algorithm == "random_forest":
        return RandomForest(kind, hp.n_estimators, hp.max_depth, seed=hp.seed)
    if algorithm == "decision_tree":
        return DecisionTree(kind, hp.max_depth, seed=hp.seed)
    if algorithm == "gradient_boosting":
        depth = 3 if hp.max_depth is None else hp.max_depth
        return GradientBoosting(kind, hp.n_estimators, depth, hp.learning_rate, seed=hp.seed)
    if algorithm == "knn":
        return KNearestNeighbors(hp.k_neighbors)
    if algorithm == "naive_bayes":
        return GaussianNaiveBayes()
    variant = {"sgd": "sgd-logistic", "logistic_regression": "logistic", "linear_svc": "hinge",
               "perceptron": "perceptron", "linear_regression": "least-squares"}[algorithm]
    return LinearModel(variant, seed=hp.seed)


_KINDS = {cls.kind: cls for cls in (DecisionTree, RandomForest, GradientBoosting, KNearestNeighbors,
                                     LinearModel, GaussianNaiveBayes, ConstantModel)}


def model_from_dict(d: dict):
    try:
        return _KINDS[d["kind"]].from_dict(d)
    except KeyError:
        raise ValueError(f"unknown model kind {d.get('kind')!r}") from None


def predict(model, features) -> np.ndarray:
    """Predictions for a feature matrix (or one feature row); raises on a width mismatch."""
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    out = model.predict(X.reshape(1, -1) if single else X)
    return out[0] if single else out


@dataclass
class TaskModel:
    algorithm: str
    hyperparameters: Hyperparameters
    model: object


@dataclass
class ModelBundle:
    merge: TaskModel
    accel: TaskModel
    heading: TaskModel
    standardizer: Standardizer
    feature_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def task(self, name: str) -> TaskModel:
        return getattr(self, name)

    def predict_all(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.merge.model.predict(X), self.accel.model.predict(X), self.heading.model.predict(X)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "feature_names": list(self.feature_names),
            "standardization": self.standardizer.to_dict(),
            "models": {
                name: {"algorithm": tm.algorithm, "hyperparameters": asdict(tm.hyperparameters),
                       "model": tm.model.to_dict()}
                for name, tm in ((t, self.task(t)) for t in TASKS)
            },
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError("not a model bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {d.get('version')}")
        tms = {
            name: TaskModel(m["algorithm"], Hyperparameters(**m["hyperparameters"]), model_from_dict(m["model"]))
            for name, m in d["models"].items()
        }
        return cls(tms["merge"], tms["accel"], tms["heading"], Standardizer.from_dict(d["standardization"]),
                   tuple(d["feature_names"]), d.get("metadata", {}))


def _open(path: Path, mode: str):
    return gzip.open(path, mode + "t", encoding="utf-8") if path.suffix == ".gz" else open(path, mode, encoding="utf-8")


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    path = Path(path)
    with _open(path, "w") as fh:
        json.dump(bundle.to_dict(), fh, separators=(",", ":"))


def load_bundle(path: str | Path) -> ModelBundle:
    path = Path(path)
    with _open(path, "r") as fh:
        return ModelBundle.from_dict(json.load(fh))
