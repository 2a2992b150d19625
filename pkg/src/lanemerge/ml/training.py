"""End-to-end training: model bundles and the accuracy table across the learner suite."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..labeler import FEATURE_NAMES, LabeledData
from .metrics import scorer
from .models import (ALGORITHMS, DEFAULT_ALGORITHM, MERGE_ALGORITHMS, REGRESSION_ALGORITHMS,
                     Hyperparameters, ModelBundle, TaskModel, make_model, tuned_hyperparameters)
from .preprocessing import Standardizer
from .selection import SPLITS, split_tags

log = logging.getLogger(__name__)


@dataclass
class Scores:
    task: str
    algorithm: str
    train: float
    val: float
    test: float
    seconds: float


def dataset_splits(data: LabeledData, seed: int = 42, ratios=(0.6, 0.2, 0.2)) -> np.ndarray:
    """One train/val/test assignment shared by all three targets, stratified on the merge flag."""
    return split_tags(data.recommendation, ratios, seed)


def fit_and_score(algorithm: str, task: str, hp: Hyperparameters, data: LabeledData,
                  tags: np.ndarray, tolerance: float | None = None):
    y = data.target(task)
    score = scorer(task, tolerance)
    tr = tags == "train"
    t0 = time.perf_counter()
    model = make_model(algorithm, task, hp).fit(data.X[tr], y[tr])
    res = {}
    for tag in SPLITS:
        m = tags == tag
        res[tag] = score(model.predict(data.X[m]), y[m]) if m.any() else float("nan")
    return model, Scores(task, algorithm, res["train"], res["val"], res["test"], time.perf_counter() - t0)


def train_bundle(data: LabeledData, seed: int = 42, algorithms: dict[str, str] | None = None,
                 overrides: dict[str, Hyperparameters] | None = None,
                 tolerance: dict[str, float] | None = None) -> tuple[ModelBundle, list[Scores]]:
    algorithms = {**DEFAULT_ALGORITHM, **(algorithms or {})}
    overrides = overrides or {}
    tolerance = tolerance or {}
    tags = dataset_splits(data, seed)
    parts, scores = {}, []
    for task in ("merge", "accel", "heading"):
        alg = algorithms[task]
        hp = overrides.get(task, tuned_hyperparameters(task, alg, seed))
        model, sc = fit_and_score(alg, task, hp, data, tags, tolerance.get(task))
        log.info("%s/%s train=%.4f val=%.4f test=%.4f (%.1fs)", task, alg, sc.train, sc.val, sc.test, sc.seconds)
        parts[task] = TaskModel(alg, hp, model)
        scores.append(sc)
    bundle = ModelBundle(
        parts["merge"], parts["accel"], parts["heading"],
        Standardizer().fit(data.X[tags == "train"]), FEATURE_NAMES,
        metadata={"seed": seed, "n_samples": len(data), "splits": {t: int((tags == t).sum()) for t in SPLITS}},
    )
    return bundle, scores


def accuracy_table(data: LabeledData, seed: int = 42, tolerance: dict[str, float] | None = None,
                   merge_algorithms=MERGE_ALGORITHMS,
                   regression_algorithms=REGRESSION_ALGORITHMS) -> list[Scores]:
    """Train every learner with its chosen hyperparameters and score all splits."""
    tolerance = tolerance or {}
    tags = dataset_splits(data, seed)
    out = []
    for alg in merge_algorithms:
        _, sc = fit_and_score(alg, "merge", tuned_hyperparameters("merge", alg, seed), data, tags)
        log.info("merge/%s val=%.4f", alg, sc.val)
        out.append(sc)
    for task in ("accel", "heading"):
        for alg in regression_algorithms:
            _, sc = fit_and_score(alg, task, tuned_hyperparameters(task, alg, seed), data, tags,
                                  tolerance.get(task))
            log.info("%s/%s val=%.4f", task, alg, sc.val)
            out.append(sc)
    return out


def write_table(scores: list[Scores], path: str | Path) -> None:
    """One row per learner with validation accuracy in percent for each target."""
    rows: dict[str, dict[str, str]] = {}
    for s in scores:
        name = ALGORITHMS[s.algorithm][0]
        if s.task == "merge" and s.algorithm == "gradient_boosting":
            name = "Gradient Boosting Classifier"
        rows.setdefault(name, {"merge": "-", "accel": "-", "heading": "-"})[s.task] = f"{100 * s.val:.2f}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "merge", "acceleration", "heading"])
        for name, r in rows.items():
            w.writerow([name, r["merge"], r["accel"], r["heading"]])


def write_scores(scores: list[Scores], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "algorithm", "train_acc", "val_acc", "test_acc", "seconds"])
        for s in scores:
            w.writerow([s.task, s.algorithm, f"{s.train:.6f}", f"{s.val:.6f}", f"{s.test:.6f}", f"{s.seconds:.2f}"])
