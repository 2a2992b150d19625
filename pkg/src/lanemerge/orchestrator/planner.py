"""Trajectory recommendations for a merging vehicle.

Travel is along +y.  The merge classifier decides whether to merge now; the
acceleration and heading regressors drive a constant-acceleration rollout at
0.1 s steps.  Every step of a merging rollout is re-checked against the
preceding and following vehicles (extrapolated at constant velocity), and any
failure demotes the recommendation to "hold lane".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..labeler import SafetyConfig, bearing, circle_safety_check, feature_vector, merge_allowed, round_features
from ..ml.models import ModelBundle
from .protocol import RoadUserDescription, TrajectoryRecommendation, Waypoint


class PlanningError(Exception):
    pass


@dataclass(frozen=True)
class PlannerSettings:
    horizon_s: float = 3.0
    step_s: float = 0.1
    min_steer_deg: float = 3.0
    max_steer_deg: float = 15.0


@dataclass(frozen=True)
class Body:
    """Point-in-time kinematic state; quacks like a trajectory sample."""

    x: float
    y: float
    speed: float
    acceleration: float
    length: float


def extrapolate(rud: RoadUserDescription, t_ms: int) -> Body:
    dt = (t_ms - rud.timestamp) / 1000.0
    h = math.radians(rud.heading)
    return Body(rud.x + rud.speed * dt * math.cos(h), rud.y + rud.speed * dt * math.sin(h),
                rud.speed, 0.0, rud.length)


def select_neighbors(snapshot: Sequence[RoadUserDescription], m: RoadUserDescription, lane: int):
    """Nearest vehicle ahead (P) and behind (F) of M in ``lane``."""
    p = f = None
    for r in snapshot:
        if r.user_id == m.user_id or r.lane_id != lane:
            continue
        dy = r.y - m.y
        if dy > 0 and (p is None or dy < p.y - m.y):
            p = r
        elif dy < 0 and (f is None or dy > f.y - m.y):
            f = r
    return p, f


def _unsafe(m: Body, p: Body | None, f: Body | None, cfg: SafetyConfig) -> bool:
    if f is not None and m.y < f.y:
        return True
    return any(o is not None and not circle_safety_check(m, o, cfg) for o in (p, f))


def _rollout(m: RoadUserDescription, p, f, bundle: ModelBundle, cfg: SafetyConfig,
             settings: PlannerSettings, target_x: float, steer: bool):
    steps = int(round(settings.horizon_s / settings.step_s))
    dt = settings.step_s
    x, y, v, a_prev = m.x, m.y, m.speed, m.acceleration
    waypoints, safe, target_index = [], True, None
    for k in range(1, steps + 1):
        t_prev = m.timestamp + int(round((k - 1) * dt * 1000))
        t = m.timestamp + int(round(k * dt * 1000))
        here = Body(x, y, v, a_prev, m.length)
        pb = extrapolate(p, t_prev) if p is not None else None
        fb = extrapolate(f, t_prev) if f is not None else None
        feats = np.array([round_features(feature_vector(here, pb, fb))])
        a = float(bundle.accel.model.predict(feats)[0])
        h = float(bundle.heading.model.predict(feats)[0])

        v_new = max(0.0, v + a * dt)
        dist = 0.5 * (v + v_new) * dt
        dx = 0.0
        err = target_x - x
        if steer and abs(err) > 1e-9:
            dev = abs((h - 90.0 + 180.0) % 360.0 - 180.0)
            dev = min(max(dev, settings.min_steer_deg), settings.max_steer_deg)
            dx = math.copysign(min(abs(err), dist * math.sin(math.radians(dev))), err)
        dy = math.sqrt(max(dist * dist - dx * dx, 0.0))
        x, y = x + dx, y + dy
        heading = bearing(0.0, 0.0, dx, dy) if dist > 0 else 90.0
        accel = (v_new - v) / dt
        v, a_prev = v_new, accel
        waypoints.append(Waypoint(t, x, y, v, accel, heading))

        pk = extrapolate(p, t) if p is not None else None
        fk = extrapolate(f, t) if f is not None else None
        body = Body(x, y, v, accel, m.length)
        if steer and _unsafe(body, pk, fk, cfg):
            safe = False
        if target_index is None and merge_allowed(Body(target_x, y, v, accel, m.length), pk, fk, cfg):
            target_index = k - 1
    return waypoints, safe, target_index


def plan_merge(snapshot: Sequence[RoadUserDescription], merging_id: str, bundle: ModelBundle | None,
               cfg: SafetyConfig, target_lane: int, target_x: float, recommendation_id: str,
               settings: PlannerSettings = PlannerSettings()) -> TrajectoryRecommendation:
    if bundle is None:
        raise PlanningError("no model loaded")
    m = next((r for r in snapshot if r.user_id == merging_id), None)
    if m is None:
        raise PlanningError(f"merging vehicle {merging_id!r} not in snapshot")
    p, f = select_neighbors(snapshot, m, target_lane)
    pb = extrapolate(p, m.timestamp) if p is not None else None
    fb = extrapolate(f, m.timestamp) if f is not None else None
    feats = np.array([round_features(feature_vector(Body(m.x, m.y, m.speed, m.acceleration, m.length), pb, fb))])
    flag = bool(bundle.merge.model.predict(feats)[0])

    waypoints, safe, target_index = _rollout(m, p, f, bundle, cfg, settings, target_x, steer=flag)
    if flag and not safe:
        flag = False
        waypoints, _, target_index = _rollout(m, p, f, bundle, cfg, settings, target_x, steer=False)
    return TrajectoryRecommendation(
        recommendation_id=recommendation_id, user_id=merging_id, waypoints=tuple(waypoints),
        merge_flag=flag, source_timestamp=m.timestamp, target_index=0 if flag else target_index,
    )
