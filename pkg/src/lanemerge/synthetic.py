"""Synthetic multi-lane highway traffic with scripted lane changes.

Each lane change gets its own scene on a separate stretch of time so scenes
never interact; every scene holds the changing vehicle, optional target-lane
neighbours (plus a far decoy), and a vehicle in the origin lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trajectory import DT, TrajectorySample, VehicleTrack

LANE_WIDTH = 3.7
BASE_TIME = 1_113_433_135.3  # seconds; the raw files use epoch milliseconds
SCENE_SPAN = 12.0
SCENE_STRIDE = 15.0


def lane_centre(lane: int) -> float:
    return (lane - 0.5) * LANE_WIDTH


@dataclass(frozen=True)
class SceneParams:
    n_lanes: int = 5
    speed_range: tuple[float, float] = (8.0, 30.0)
    p_absent: float = 0.12
    f_absent: float = 0.12


def _kinematics(rng, n: int, v0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a0 = rng.uniform(-1.2, 1.2)
    amp = rng.uniform(0.0, 0.8)
    w = rng.uniform(0.3, 1.2)
    phase = rng.uniform(0, 2 * math.pi)
    t = np.arange(n) * DT
    acc = a0 + amp * np.sin(w * t + phase)
    v = np.empty(n)
    y = np.empty(n)
    v[0], y[0] = v0, 0.0
    for i in range(1, n):
        v[i] = max(0.5, v[i - 1] + acc[i - 1] * DT)
        y[i] = y[i - 1] + v[i - 1] * DT
    acc = np.round(acc, 3)
    return y, v, acc


def _track(vid: int, t0: float, xs, ys, lanes, v, acc, length, width) -> VehicleTrack:
    samples = tuple(
        TrajectorySample(vid, round(t0 + i * DT, 1), float(xs[i]), float(ys[i]), int(lanes[i]),
                         float(v[i]), float(acc[i]), length, width)
        for i in range(len(ys))
    )
    return VehicleTrack(vid, samples)


def _length(rng) -> float:
    # roughly one heavy vehicle in twelve
    return float(rng.uniform(9.0, 14.0) if rng.random() < 0.08 else rng.uniform(3.8, 5.5))


def generate_highway(n_events: int, seed: int = 42, n_incomplete: int = 0,
                     params: SceneParams = SceneParams()) -> dict[int, VehicleTrack]:
    """Tracks containing ``n_events`` complete lane changes (each with full
    4 s / 3 s coverage) plus ``n_incomplete`` lane changes too close to a
    track boundary to be windowed."""
    rng = np.random.default_rng(seed)
    tracks: dict[int, VehicleTrack] = {}
    vid = 1
    n = int(round(SCENE_SPAN / DT))
    change_at = 50  # sample index of the lane change inside a scene

    for scene in range(n_events + n_incomplete):
        t0 = BASE_TIME + scene * SCENE_STRIDE
        incomplete = scene >= n_events
        from_lane = int(rng.integers(1, params.n_lanes + 1))
        if from_lane == 1:
            to_lane = 2
        elif from_lane == params.n_lanes:
            to_lane = from_lane - 1
        else:
            to_lane = from_lane + int(rng.choice([-1, 1]))

        # merging vehicle
        vm = rng.uniform(*params.speed_range)
        y, v, acc = _kinematics(rng, n, vm)
        y += rng.uniform(50, 400)
        lanes = np.where(np.arange(n) < change_at, from_lane, to_lane)
        tt = (np.arange(n) - change_at) * DT
        blend = 0.5 * (1 + np.tanh(tt / 0.8))
        xs = lane_centre(from_lane) + (lane_centre(to_lane) - lane_centre(from_lane)) * blend
        xs = xs + rng.normal(0, 0.05, n)
        sl = slice(0, n)
        if incomplete:
            sl = slice(change_at - 15, n) if rng.random() < 0.5 else slice(0, change_at + 10)
        m_len = _length(rng)
        tracks[vid] = _track(vid, t0 + sl.start * DT, xs[sl], y[sl], lanes[sl], v[sl], acc[sl],
                             m_len, float(rng.uniform(1.7, 2.3)))
        m_y_event = y[change_at]
        vid += 1

        # target-lane neighbours: offsets relative to M at the lane change
        offsets = []
        if rng.random() >= params.p_absent:
            offsets.append(rng.uniform(2.0, 60.0))
        if rng.random() >= params.f_absent:
            offsets.append(-rng.uniform(2.0, 60.0))
        if offsets and max(offsets) > 0:
            offsets.append(max(offsets) + rng.uniform(40, 80))
        elif offsets:
            offsets.append(min(offsets) - rng.uniform(40, 80))
        for off in offsets:
            vn = float(np.clip(vm + rng.normal(0, 3.0), *params.speed_range))
            yn, vv, an = _kinematics(rng, n, vn)
            yn = yn - yn[change_at] + m_y_event + off
            xn = lane_centre(to_lane) + rng.normal(0, 0.1, n)
            tracks[vid] = _track(vid, t0, xn, yn, np.full(n, to_lane), vv, an, _length(rng),
                                 float(rng.uniform(1.7, 2.5)))
            vid += 1

        # origin-lane traffic, irrelevant to the triple
        vo = float(np.clip(vm + rng.normal(0, 2.0), *params.speed_range))
        yo, vv, ao = _kinematics(rng, n, vo)
        yo = yo + m_y_event + rng.choice([-1, 1]) * rng.uniform(15, 50)
        tracks[vid] = _track(vid, t0, np.full(n, lane_centre(from_lane)), yo, np.full(n, from_lane),
                             vv, ao, _length(rng), 2.0)
        vid += 1
    return tracks
