"""Splits, cross-validation and hyperparameter sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .metrics import exact_match_accuracy

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    split: np.ndarray  # one of SPLITS per sample

    def part(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == tag
        return self.X[mask], self.y[mask]

    def counts(self) -> dict[str, int]:
        return {t: int((self.split == t).sum()) for t in SPLITS}


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    a = int(round(ratios[0] * n))
    b = int(round(ratios[1] * n))
    b = min(b, n - a)
    return [a, b, n - a - b]


def split_tags(y, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 42,
               stratify: bool = True) -> np.ndarray:
    """Train/val/test tags; stratified by class unless ``stratify`` is False."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    tags = np.empty(len(y), dtype="<U5")
    groups = [np.flatnonzero(y == c) for c in np.unique(y)] if stratify else [np.arange(len(y))]
    for members in groups:
        members = rng.permutation(members)
        sizes = _allocate(len(members), ratios)
        if stratify:
            for tag, size, r in zip(SPLITS, sizes, ratios):
                if r > 0 and size == 0:
                    raise ValueError(f"class {y[members[0]]!r} absent from the {tag} split")
        bounds = np.cumsum([0] + sizes)
        for tag, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
            tags[members[lo:hi]] = tag
    return tags


def split_dataset(X, y, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 42,
                  stratify: bool = True) -> Dataset:
    X, y = np.asarray(X), np.asarray(y)
    return Dataset(X, y, split_tags(y, ratios, seed, stratify))


def fold_ids(y, folds: int = 10, seed: int = 42, stratify: bool = True) -> np.ndarray:
    """Fold index per sample.  Stratified folds deal each shuffled class
    round-robin, continuing where the previous class stopped."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    out = np.empty(len(y), dtype=int)
    if not stratify:
        perm = rng.permutation(len(y))
        for f, chunk in enumerate(np.array_split(perm, folds)):
            out[chunk] = f
        return out
    offset = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        if len(members) < folds:
            raise ValueError(f"class {c!r} has {len(members)} members, fewer than {folds} folds")
        out[members] = (offset + np.arange(len(members))) % folds
        offset = (offset + len(members)) % folds
    return out


@dataclass
class CVResult:
    scores: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))


def cross_validate(make_model: Callable[[], object], X, y, folds: int = 10, seed: int = 42,
                   stratify: bool = True,
                   score: Callable = exact_match_accuracy) -> CVResult:
    X, y = np.asarray(X), np.asarray(y)
    ids = fold_ids(y, folds, seed, stratify)
    scores = []
    for f in range(folds):
        test = ids == f
        model = make_model().fit(X[~test], y[~test])
        scores.append(score(model.predict(X[test]), y[test]))
    return CVResult(scores)


@dataclass
class SweepResult:
    param: str
    values: list
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    chosen: object = None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "train_acc", "val_acc"])
            for v, tr, va in zip(self.values, self.train_acc, self.val_acc):
                w.writerow([v, f"{tr:.6f}", f"{va:.6f}"])


def _evaluate(make_model, values, train, val, score, param):
    res = SweepResult(param, list(values))
    for v in values:
        model = make_model(v).fit(*train)
        res.train_acc.append(score(model.predict(train[0]), train[1]))
        res.val_acc.append(score(model.predict(val[0]), val[1]))
    return res


# over-fitting gap allowed when picking a depth, as a fraction
DEPTH_GAP = {"decision_tree": 0.01}
DEFAULT_DEPTH_GAP = 0.015


def depth_gap(algorithm: str) -> float:
    return DEPTH_GAP.get(algorithm, DEFAULT_DEPTH_GAP)


def choose_by_gap(values, train_acc, val_acc, max_gap: float):
    """Largest value whose validation accuracy trails training by at most ``max_gap``
    (fractions, so 0.015 is 1.5 points); the first value when none qualifies."""
    ok = [v for v, tr, va in zip(values, train_acc, val_acc) if tr - va <= max_gap + 1e-12]
    return max(ok) if ok else values[0]


def sweep_max_depth(make_model: Callable[[int], object], train, val, depths: Sequence[int],
                    max_gap: float = 0.015, score: Callable = exact_match_accuracy) -> SweepResult:
    if not len(depths):
        raise ValueError("empty depth range")
    res = _evaluate(make_model, depths, train, val, score, "max_depth")
    res.chosen = choose_by_gap(res.values, res.train_acc, res.val_acc, max_gap)
    return res


def sweep_estimators(make_model: Callable[[int], object], train, val, values: Sequence[int],
                     score: Callable = exact_match_accuracy) -> SweepResult:
    if not len(values):
        raise ValueError("empty estimator grid")
    res = _evaluate(make_model, values, train, val, score, "n_estimators")
    res.chosen = res.values[int(np.argmax(res.val_acc))]
    return res


def sweep_k(knn, train, val, ks: Sequence[int], score: Callable = exact_match_accuracy) -> SweepResult:
    """K sweep for a fitted-once neighbour model; neighbour lists are computed
    a single time at the largest K."""
    knn.fit(*train)
    kmax = max(ks)
    nb_train = knn.kneighbors(train[0], kmax)
    nb_val = knn.kneighbors(val[0], kmax)
    res = SweepResult("k_neighbors", list(ks))
    for k in ks:
        res.train_acc.append(score(knn.vote(nb_train[:, :k]), train[1]))
        res.val_acc.append(score(knn.vote(nb_val[:, :k]), val[1]))
    res.chosen = res.values[int(np.argmax(res.val_acc))]
    return res
