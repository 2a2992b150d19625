"""Replay harness: stands in for the gateway, streams a scenario to a running
orchestrator and measures RUD-to-recommendation round trips on loopback.

Only the orchestrator's share of the end-to-end budget is measured; radio and
gateway transport are not emulated.
"""

from __future__ import annotations

import csv
import json
import math
import socket
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .labeler import KMH, SafetyConfig
from .orchestrator.protocol import (ErrorMessage, FrameBuffer, ProtocolError, RoadUserDescription, Subscription,
                                    TrajectoryRecommendation, decode_message, encode_message)
from .synthetic import lane_centre

BUDGET_MS = 30.0
UPLINK_REQUIRED_KBPS = 320.0
DOWNLINK_REQUIRED_KBPS = 4700.0
BASE_EPOCH_MS = 1_113_433_135_300
BUNDLED_SCENARIO = Path(__file__).parent / "data" / "merge_scenario.jsonl"


@dataclass(frozen=True)
class ScenarioParams:
    """Ramp merge with M beside the gap between P (ahead) and F (behind).

    ``gap`` is the centre-to-centre spacing of P and F.  ``m_offset`` places M
    relative to the gap midpoint.  The seed adds a small deterministic jitter
    to the initial positions.
    """

    m_speed: float = 25.0
    p_speed: float = 25.0
    f_speed: float = 25.0
    m_accel: float = 0.0
    p_accel: float = 0.0
    f_accel: float = 0.0
    gap: float = 40.0
    m_offset: float = 0.0
    carriageway_lane: int = 1
    ramp_lane: int = 2
    duration: float = 7.0
    rate_hz: float = 10.0
    length: float = 4.5
    width: float = 1.8
    seed: int = 42
    jitter: float = 0.5


@dataclass
class ScenarioTrace:
    metadata: dict
    messages: list   # Subscription first, then RoadUserDescription in timestamp order

    @property
    def ruds(self) -> list[RoadUserDescription]:
        return [m for m in self.messages if isinstance(m, RoadUserDescription)]

    @property
    def subscriptions(self) -> list[Subscription]:
        return [m for m in self.messages if isinstance(m, Subscription)]

    def write(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(json.dumps({"type": "metadata", "payload": self.metadata}).encode() + b"\n")
            for m in self.messages:
                fh.write(encode_message(m))


def read_trace(path: str | Path) -> ScenarioTrace:
    with open(path, "rb") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trace")
    head = json.loads(lines[0])
    if head.get("type") != "metadata":
        raise ValueError(f"{path}: first record must be metadata")
    msgs = [decode_message(ln) for ln in lines[1:]]
    ts = [m.timestamp for m in msgs if isinstance(m, RoadUserDescription)]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError(f"{path}: messages out of timestamp order")
    return ScenarioTrace(head.get("payload", {}), msgs)


def _kinematics(y0: float, v0: float, a: float, t: np.ndarray):
    """Constant acceleration, holding at rest once speed reaches zero."""
    t_stop = -v0 / a if a < 0 else np.inf
    tt = np.minimum(t, t_stop)
    v = np.maximum(v0 + a * tt, 0.0)
    y = y0 + v0 * tt + 0.5 * a * tt * tt
    acc = np.where(t < t_stop, a, 0.0)
    return y, v, acc


def synth_scenario(params: ScenarioParams = ScenarioParams()) -> ScenarioTrace:
    if params.duration < 0:
        raise ValueError("duration must be non-negative")
    if params.rate_hz <= 0 or min(params.m_speed, params.p_speed, params.f_speed) < 0:
        raise ValueError("invalid kinematic parameters")
    rng = np.random.default_rng(params.seed)
    j = rng.uniform(-params.jitter, params.jitter, 3)
    n = int(round(params.duration * params.rate_hz))
    step_ms = int(round(1000 / params.rate_hz))
    t = np.arange(n) * step_ms / 1000.0
    y_f0 = 100.0 + j[0]
    y_p0 = y_f0 + params.gap + j[1]
    y_m0 = 0.5 * (y_f0 + y_p0) + params.m_offset + j[2]

    x_main = lane_centre(params.carriageway_lane)
    x_ramp = lane_centre(params.ramp_lane)
    rows = [  # per-tick emission order: P, F, then M
        ("P", y_p0, params.p_speed, params.p_accel, x_main, params.carriageway_lane),
        ("F", y_f0, params.f_speed, params.f_accel, x_main, params.carriageway_lane),
        ("M", y_m0, params.m_speed, params.m_accel, x_ramp, params.ramp_lane),
    ]
    tracks = {uid: _kinematics(y0, v0, a, t) for uid, y0, v0, a, _, _ in rows}
    msgs: list = [Subscription("M", params.carriageway_lane, x_main)]
    for k in range(n):
        ts = BASE_EPOCH_MS + k * step_ms
        for uid, _, _, _, x, lane in rows:
            y, v, a = tracks[uid]
            msgs.append(RoadUserDescription(uid, ts, round(x, 3), round(float(y[k]), 3), round(float(v[k]), 3),
                                            round(float(a[k]), 3), 90.0, lane, params.length, params.width))
    meta = {
        "scenario": "ramp_merge",
        "lanes": {"carriageway": params.carriageway_lane, "ramp": params.ramp_lane,
                  "carriageway_x": x_main, "ramp_x": x_ramp},
        "roster": {"M": "merging", "P": "preceding", "F": "following"},
        "params": asdict(params),
        "seed": params.seed,
    }
    return ScenarioTrace(meta, msgs)


# ---------------------------------------------------------------------------
# latency report


@dataclass
class LatencyReport:
    durations_ms: list[float] = field(default_factory=list)
    budget_ms: float = BUDGET_MS
    sent: int = 0
    expected: int = 0
    received: int = 0
    errors: int = 0
    complete: bool = False
    error: str | None = None
    uplink_kbps: float = 0.0
    downlink_kbps: float = 0.0
    note: str = ("loopback application-to-application round trip; the radio and "
                 "gateway share of the end-to-end budget is excluded")

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.durations_ms, q)) if self.durations_ms else math.nan

    @property
    def p50(self) -> float:
        return self.percentile(50)

    @property
    def p95(self) -> float:
        return self.percentile(95)

    @property
    def p99(self) -> float:
        return self.percentile(99)

    @property
    def max(self) -> float:
        return max(self.durations_ms) if self.durations_ms else math.nan

    @property
    def passed(self) -> bool:
        return self.complete and bool(self.durations_ms) and self.p99 <= self.budget_ms

    @property
    def uplink_ok(self) -> bool:
        return self.uplink_kbps <= UPLINK_REQUIRED_KBPS

    @property
    def downlink_ok(self) -> bool:
        return self.downlink_kbps <= DOWNLINK_REQUIRED_KBPS

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "round_trip_ms"])
            for i, d in enumerate(self.durations_ms):
                w.writerow([i, f"{d:.4f}"])

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"messages sent {self.sent}, recommendations {self.received}/{self.expected}, "
            f"errors {self.errors}, complete {self.complete}",
        ]
        if self.error:
            lines.append(f"failure: {self.error}")
        if self.durations_ms:
            lines.append(f"round trip ms: p50 {self.p50:.3f}  p95 {self.p95:.3f}  "
                         f"p99 {self.p99:.3f}  max {self.max:.3f}")
        lines.append(f"budget {self.budget_ms:.0f} ms (p99): {verdict}")
        lines.append(f"uplink demand {self.uplink_kbps:.1f} kbps vs {UPLINK_REQUIRED_KBPS:.0f} kbps available: "
                     f"{'ok' if self.uplink_ok else 'exceeds'}")
        lines.append(f"downlink demand {self.downlink_kbps:.1f} kbps vs {DOWNLINK_REQUIRED_KBPS:.0f} kbps "
                     f"available: {'ok' if self.downlink_ok else 'exceeds'}")
        lines.append(f"note: {self.note}")
        return "\n".join(lines)


@dataclass
class ReplayResult:
    recommendations: list[TrajectoryRecommendation]
    report: LatencyReport


def _trace_span_s(trace: ScenarioTrace) -> float:
    ticks = sorted({m.timestamp for m in trace.ruds})
    if len(ticks) < 2:
        return 1.0
    step = min(b - a for a, b in zip(ticks, ticks[1:]))
    return (ticks[-1] - ticks[0] + step) / 1000.0


def _bitrates(trace: ScenarioTrace, recs: Sequence[TrajectoryRecommendation]) -> tuple[float, float]:
    """Mean demand over the trace's span, from encoded message sizes."""
    span = _trace_span_s(trace)
    up = sum(len(encode_message(m)) for m in trace.messages) * 8 / 1000.0 / span
    down = sum(len(encode_message(r)) for r in recs) * 8 / 1000.0 / span
    return up, down


def replay(trace: ScenarioTrace, endpoint: tuple[str, int], speed_factor: float = 0.0,
           budget_ms: float = BUDGET_MS, timeout: float = 10.0) -> ReplayResult:
    """Send ``trace`` to ``endpoint`` and collect recommendations.

    ``speed_factor`` scales the recorded inter-message spacing: 1 is real time,
    0 sends as fast as possible.
    """
    if speed_factor < 0:
        raise ValueError("speed_factor must be non-negative")
    report = LatencyReport(budget_ms=budget_ms)
    subscribed = {s.user_id for s in trace.subscriptions}
    report.expected = sum(1 for r in trace.ruds if r.user_id in subscribed)
    try:
        sock = socket.create_connection(endpoint, timeout=2.0)
    except OSError as exc:
        report.error = f"cannot connect to {endpoint[0]}:{endpoint[1]}: {exc}"
        return ReplayResult([], report)
    sock.settimeout(timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    sent_at: dict[tuple[str, int], float] = {}
    recs: list[TrajectoryRecommendation] = []
    lock = threading.Lock()
    failure: list[str] = []

    def receive():
        buf = FrameBuffer()
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    return
                now = time.monotonic()
                for frame in buf.feed(data):
                    try:
                        msg = decode_message(frame)
                    except ProtocolError as exc:
                        failure.append(f"undecodable reply: {exc.message}")
                        continue
                    if isinstance(msg, ErrorMessage):
                        report.errors += 1
                    elif isinstance(msg, TrajectoryRecommendation):
                        with lock:
                            t0 = sent_at.get((msg.user_id, msg.source_timestamp))
                            recs.append(msg)
                        if t0 is not None:
                            report.durations_ms.append((now - t0) * 1000.0)
        except OSError as exc:
            failure.append(f"connection lost: {exc}")

    rx = threading.Thread(target=receive, name="replay-rx", daemon=True)
    rx.start()
    ts0 = next((m.timestamp for m in trace.ruds), 0)
    start = time.monotonic()
    try:
        for m in trace.messages:
            if speed_factor > 0 and isinstance(m, RoadUserDescription):
                delay = start + (m.timestamp - ts0) / 1000.0 * speed_factor - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            frame = encode_message(m)
            if isinstance(m, RoadUserDescription) and m.user_id in subscribed:
                with lock:
                    sent_at[(m.user_id, m.timestamp)] = time.monotonic()
            sock.sendall(frame)
            report.sent += 1
        sock.shutdown(socket.SHUT_WR)
    except OSError as exc:
        failure.append(f"send failed: {exc}")
    rx.join(timeout + 1.0)
    sock.close()

    report.received = len(recs)
    report.complete = not failure and report.sent == len(trace.messages) and not rx.is_alive()
    if failure:
        report.error = "; ".join(failure)
    report.uplink_kbps, report.downlink_kbps = _bitrates(trace, recs)
    return ReplayResult(recs, report)


# ---------------------------------------------------------------------------
# independent safety oracle


@dataclass(frozen=True)
class Violation:
    recommendation_id: str
    waypoint_index: int
    other: str
    reason: str


def oracle_check(trace: ScenarioTrace, recommendations: Sequence[TrajectoryRecommendation],
                 cfg: SafetyConfig = SafetyConfig()) -> list[Violation]:
    """Re-check every waypoint of every merge recommendation against the
    vehicles in the target lane, extrapolated at constant velocity."""
    targets = {s.user_id: s.target_lane for s in trace.subscriptions}
    ruds = trace.ruds
    out = []
    for rec in recommendations:
        if not rec.merge_flag:
            continue
        latest: dict[str, RoadUserDescription] = {}
        for r in ruds:
            if r.timestamp <= rec.source_timestamp:
                latest[r.user_id] = r
        m = latest.get(rec.user_id)
        lane = targets.get(rec.user_id)
        if m is None or lane is None:
            continue
        ahead = [r for r in latest.values() if r.lane_id == lane and r.user_id != m.user_id and r.y > m.y]
        behind = [r for r in latest.values() if r.lane_id == lane and r.user_id != m.user_id and r.y < m.y]
        neigh = []
        if ahead:
            neigh.append(min(ahead, key=lambda r: r.y))
        if behind:
            neigh.append(max(behind, key=lambda r: r.y))
        for i, w in enumerate(rec.waypoints):
            radius = cfg.clearance_factor * w.speed * KMH
            for o in neigh:
                dt = (w.timestamp - o.timestamp) / 1000.0
                ox = o.x + o.speed * dt * math.cos(math.radians(o.heading))
                oy = o.y + o.speed * dt * math.sin(math.radians(o.heading))
                if (ox - w.x) ** 2 + (oy - w.y) ** 2 <= (radius + o.length) ** 2:
                    out.append(Violation(rec.recommendation_id, i, o.user_id, "clearance"))
                if o in behind and w.y < oy:
                    out.append(Violation(rec.recommendation_id, i, o.user_id, "behind_following"))
    return out
