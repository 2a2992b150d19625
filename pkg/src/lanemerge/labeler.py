"""Geometric merge labels: recommendation, acceleration and heading per window sample.

Objects passed to the geometric predicates only need ``x``, ``y``, ``speed`` and
``length`` attributes, so trajectory samples and road-user descriptions from
the orchestrator share the same code path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trajectory import WINDOW_BEFORE, WINDOW_LEN, ScenarioWindow

KMH = 3.6
ABSENT_DY = 1e4

FEATURE_NAMES = (
    "speed_m", "accel_m", "length_m",
    "dy_p", "dx_p", "speed_p", "accel_p", "length_p",
    "dy_f", "dx_f", "speed_f", "accel_f", "length_f",
)
# positions get two decimals, everything else one
POSITION_FEATURES = frozenset({"dy_p", "dx_p", "dy_f", "dx_f"})


@dataclass(frozen=True)
class SafetyConfig:
    """Clearance rule parameters.

    The circle radius around M and the longitudinal safe distance are both
    ``clearance_factor * speed`` with speed in km/h and the result in metres.
    Headings are degrees counterclockwise from +x in [0, 360).
    """

    clearance_factor: float = 0.1

    def __post_init__(self):
        if not self.clearance_factor > 0:
            raise ValueError("clearance_factor must be positive")

    def safe_distance(self, speed_mps: float) -> float:
        return self.clearance_factor * speed_mps * KMH


@dataclass(frozen=True)
class MostDesiredPosition:
    msp_index: int
    msp_xy: tuple[float, float]

    def __post_init__(self):
        if not 0 <= self.msp_index < WINDOW_LEN:
            raise ValueError(f"msp_index {self.msp_index} outside window")


@dataclass(frozen=True)
class LabeledSample:
    features: tuple[float, ...]
    recommendation: bool
    accel_label: float
    heading_label: float
    flagged: bool = False
    window_id: int = 0
    sample_index: int = 0


def _front(o) -> float:
    return o.y + o.length / 2


def _rear(o) -> float:
    return o.y - o.length / 2


def normalize_heading(angle: float) -> float:
    r = math.fmod(angle, 360.0)
    if r < 0:
        r += 360.0
    # fmod of tiny negatives lands on 360.0 after the shift
    return 0.0 if r >= 360.0 else r + 0.0


def bearing(x0: float, y0: float, x1: float, y1: float) -> float:
    return normalize_heading(math.degrees(math.atan2(y1 - y0, x1 - x0)))


def circle_safety_check(m, other, cfg: SafetyConfig = SafetyConfig()) -> bool:
    """True when M's speed circle and the other vehicle's length circle are disjoint.

    Touching circles count as contact.
    """
    r_m = cfg.safe_distance(m.speed)
    return math.hypot(other.x - m.x, other.y - m.y) > r_m + other.length


def gap_admissible(m, p, f, cfg: SafetyConfig = SafetyConfig()) -> bool:
    sd = cfg.safe_distance(m.speed)
    if p is not None and not _front(m) + sd <= _rear(p):
        return False
    if f is not None and not _front(f) + sd <= _rear(m):
        return False
    return True


def merge_allowed(m, p, f, cfg: SafetyConfig = SafetyConfig()) -> bool:
    """Recommendation rule for one instant, with absent neighbours passed as None."""
    if f is not None and m.y < f.y:
        return False
    for other in (p, f):
        if other is not None and not circle_safety_check(m, other, cfg):
            return False
    return gap_admissible(m, p, f, cfg)


def label_recommendation(window: ScenarioWindow, sample_index: int,
                         cfg: SafetyConfig = SafetyConfig()) -> bool:
    if not 0 <= sample_index < WINDOW_LEN:
        raise IndexError(sample_index)
    return merge_allowed(window.m_samples[sample_index], window.p_at(sample_index),
                         window.f_at(sample_index), cfg)


def compute_msp(window: ScenarioWindow, cfg: SafetyConfig = SafetyConfig()) -> MostDesiredPosition:
    """Closest M sample to the clearance-maximising point of the P/F gap at event time."""
    m0 = window.m_samples[WINDOW_BEFORE]
    p, f = window.p_at(WINDOW_BEFORE), window.f_at(WINDOW_BEFORE)
    if p is None or f is None:
        target = (m0.x, m0.y)
    else:
        ty = (_rear(p) + _front(f)) / 2
        sd = cfg.safe_distance(m0.speed)
        lo = _front(f) + sd + m0.length / 2
        hi = _rear(p) - sd - m0.length / 2
        if lo <= hi:
            ty = min(max(ty, lo), hi)
        target = ((p.x + f.x) / 2, ty)
    xy = np.array([(s.x, s.y) for s in window.m_samples])
    d = np.hypot(xy[:, 0] - target[0], xy[:, 1] - target[1])
    return MostDesiredPosition(int(np.argmin(d)), (float(target[0]), float(target[1])))


def next_true_index(recommendations: Sequence[bool]) -> np.ndarray:
    """For each i, the first j >= i with a true recommendation, or -1."""
    out = np.full(len(recommendations), -1, dtype=int)
    nxt = -1
    for i in range(len(recommendations) - 1, -1, -1):
        if recommendations[i]:
            nxt = i
        out[i] = nxt
    return out


def acceleration_labels(accels: Sequence[float], msp_index: int,
                        recommendations: Sequence[bool]) -> tuple[np.ndarray, np.ndarray]:
    """Acceleration label for every index, plus a flag for false samples with
    no true recommendation ahead of them.

    Labels are inclusive range means taken from one prefix-sum array.
    """
    acc = np.asarray(accels, dtype=float)
    n = len(acc)
    prefix = np.concatenate(([0.0], np.cumsum(acc)))

    def mean(a, b):
        return (prefix[b + 1] - prefix[a]) / (b - a + 1)

    nxt = next_true_index(recommendations)
    labels = np.empty(n)
    flagged = np.zeros(n, dtype=bool)
    for i in range(n):
        if not recommendations[i]:
            j = nxt[i]
            if j < 0:
                j = n - 1
                flagged[i] = True
            labels[i] = mean(i, j)
        elif i < msp_index:
            labels[i] = mean(i, msp_index)
        elif i > msp_index:
            labels[i] = mean(msp_index, i)
        else:
            labels[i] = acc[i]
    return labels, flagged


def label_acceleration(window: ScenarioWindow, sample_index: int, msp: MostDesiredPosition,
                       recommendations: Sequence[bool] | None = None,
                       cfg: SafetyConfig = SafetyConfig()) -> float:
    if recommendations is None:
        recommendations = [label_recommendation(window, i, cfg) for i in range(WINDOW_LEN)]
    labels, _ = acceleration_labels([s.acceleration for s in window.m_samples],
                                    msp.msp_index, recommendations)
    return float(labels[sample_index])


def _motion_heading(window: ScenarioWindow, i: int) -> float:
    ms = window.m_samples
    a, b = ms[max(i - 1, 0)], ms[min(i + 1, len(ms) - 1)]
    if a.x == b.x and a.y == b.y:
        return 90.0
    return bearing(a.x, a.y, b.x, b.y)


def heading_labels(window: ScenarioWindow, msp: MostDesiredPosition,
                   recommendations: Sequence[bool]) -> np.ndarray:
    ms = window.m_samples
    nxt = next_true_index(recommendations)
    out = np.empty(len(ms))
    for i, s in enumerate(ms):
        if recommendations[i] or nxt[i] < 0:
            tx, ty = msp.msp_xy
        else:
            tx, ty = ms[nxt[i]].x, ms[nxt[i]].y
        if math.hypot(tx - s.x, ty - s.y) < 1e-9:
            out[i] = _motion_heading(window, i)
        else:
            out[i] = bearing(s.x, s.y, tx, ty)
    return out


def label_heading(window: ScenarioWindow, sample_index: int, msp: MostDesiredPosition,
                  cfg: SafetyConfig = SafetyConfig(),
                  recommendations: Sequence[bool] | None = None) -> float:
    if recommendations is None:
        recommendations = [label_recommendation(window, i, cfg) for i in range(WINDOW_LEN)]
    return float(heading_labels(window, msp, recommendations)[sample_index])


def feature_vector(m, p, f) -> list[float]:
    """Unrounded feature vector for M with neighbours P and F (either may be None)."""
    out = [m.speed, m.acceleration, m.length]
    for nb, dy_absent in ((p, ABSENT_DY), (f, -ABSENT_DY)):
        if nb is None:
            out += [dy_absent, 0.0, m.speed, 0.0, 0.0]
        else:
            out += [nb.y - m.y, nb.x - m.x, nb.speed, nb.acceleration, nb.length]
    return out


def round_features(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(
        round(v, 2) if name in POSITION_FEATURES else round(v, 1)
        for name, v in zip(FEATURE_NAMES, values)
    )


def label_window(window: ScenarioWindow, cfg: SafetyConfig = SafetyConfig(),
                 window_id: int = 0) -> list[LabeledSample]:
    recs = [label_recommendation(window, i, cfg) for i in range(WINDOW_LEN)]
    msp = compute_msp(window, cfg)
    accel, flagged = acceleration_labels([s.acceleration for s in window.m_samples],
                                         msp.msp_index, recs)
    heading = heading_labels(window, msp, recs)
    out = []
    for i, m in enumerate(window.m_samples):
        feats = round_features(feature_vector(m, window.p_at(i), window.f_at(i)))
        out.append(LabeledSample(
            features=feats,
            recommendation=recs[i],
            accel_label=float(round(accel[i])),
            heading_label=normalize_heading(round(float(heading[i]), 1)),
            flagged=bool(flagged[i]),
            window_id=window_id,
            sample_index=i,
        ))
    return out


def build_dataset(windows: Iterable[ScenarioWindow],
                  cfg: SafetyConfig = SafetyConfig()) -> list[LabeledSample]:
    out: list[LabeledSample] = []
    for wid, w in enumerate(windows):
        out.extend(label_window(w, cfg, wid))
    return out


# ---------------------------------------------------------------------------
# dataset file (CSV with header)

DATASET_COLUMNS = ("window_id", "sample_index", *FEATURE_NAMES,
                   "recommendation", "accel", "heading", "flagged")


def write_dataset(samples: Iterable[LabeledSample], path: str | Path) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_COLUMNS)
        for s in samples:
            w.writerow([s.window_id, s.sample_index, *s.features, int(s.recommendation),
                        s.accel_label, s.heading_label, int(s.flagged)])
            n += 1
    return n


@dataclass
class LabeledData:
    """Column view of a labeled dataset."""

    X: np.ndarray
    recommendation: np.ndarray
    accel: np.ndarray
    heading: np.ndarray
    flagged: np.ndarray
    window_id: np.ndarray
    sample_index: np.ndarray

    def __len__(self) -> int:
        return len(self.X)

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "LabeledData":
        nf = len(FEATURE_NAMES)
        return cls(
            X=np.array([s.features for s in samples], dtype=float).reshape(-1, nf),
            recommendation=np.array([s.recommendation for s in samples], dtype=bool),
            accel=np.array([s.accel_label for s in samples], dtype=float),
            heading=np.array([s.heading_label for s in samples], dtype=float),
            flagged=np.array([s.flagged for s in samples], dtype=bool),
            window_id=np.array([s.window_id for s in samples], dtype=int),
            sample_index=np.array([s.sample_index for s in samples], dtype=int),
        )

    def target(self, task: str) -> np.ndarray:
        return {"merge": self.recommendation, "accel": self.accel, "heading": self.heading}[task]


def read_dataset(path: str | Path) -> LabeledData:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return LabeledData.from_samples([])
        if tuple(header) != DATASET_COLUMNS:
            raise ValueError(f"{path}: unexpected dataset header")
        nf = len(FEATURE_NAMES)
        samples = [
            LabeledSample(
                features=tuple(float(v) for v in row[2:2 + nf]),
                recommendation=row[2 + nf] == "1",
                accel_label=float(row[3 + nf]),
                heading_label=float(row[4 + nf]),
                flagged=row[5 + nf] == "1",
                window_id=int(row[0]),
                sample_index=int(row[1]),
            )
            for row in reader if row
        ]
    return LabeledData.from_samples(samples)
