"""Newline-delimited JSON messages between the gateway and the orchestrator.

Every frame is one JSON object ``{"type", "version", "payload"}`` followed by
``\\n``.  See ``docs/protocol.md`` for field tables and examples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Union

from ..labeler import normalize_heading

VERSION = 1
MAX_FRAME = 64 * 1024
MAX_TIMESTAMP = 2 ** 53 - 1   # largest integer every JSON peer can represent exactly
SOURCES = ("vehicle", "perception")
VERDICTS = ("accept", "reject", "abort")


class ProtocolError(Exception):
    """Carries an error ``code`` sent back to the peer in an ``error`` message."""

    def __init__(self, code: str, message: str, ref: str | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.ref = ref


class FramingError(ProtocolError):
    def __init__(self, message: str):
        super().__init__("framing", message)


@dataclass(frozen=True)
class Region:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError("empty region")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class RoadUserDescription:
    user_id: str
    timestamp: int          # ms since epoch
    x: float                # m
    y: float                # m
    speed: float            # m/s
    acceleration: float     # m/s^2
    heading: float          # deg, [0, 360)
    lane_id: int
    length: float           # m
    width: float            # m
    connected: bool = True
    source: str = "vehicle"

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")
        if not 0.0 <= self.heading < 360.0:
            raise ValueError("heading outside [0, 360)")
        if self.speed < 0 or self.length <= 0 or self.width <= 0:
            raise ValueError("invalid speed or dimensions")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


@dataclass(frozen=True)
class Subscription:
    """Registers ``user_id`` as a merging vehicle: recommendations for it are
    sent to the subscribing connection."""

    user_id: str
    target_lane: int
    target_x: float          # lateral centre of the target lane, m
    region: Region | None = None


@dataclass(frozen=True)
class Waypoint:
    timestamp: int
    x: float
    y: float
    speed: float
    acceleration: float
    heading: float


@dataclass(frozen=True)
class TrajectoryRecommendation:
    recommendation_id: str
    user_id: str
    waypoints: tuple[Waypoint, ...]
    merge_flag: bool
    source_timestamp: int            # timestamp of the M description the plan started from
    target_index: int | None = None  # first waypoint where merging is judged safe, if any

    def __post_init__(self):
        ts = [w.timestamp for w in self.waypoints]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("waypoint timestamps must be strictly increasing")
        if any(not 0.0 <= w.heading < 360.0 for w in self.waypoints):
            raise ValueError("waypoint heading outside [0, 360)")


@dataclass(frozen=True)
class ManeuverFeedback:
    recommendation_id: str
    user_id: str
    verdict: str

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    message: str
    ref: str | None = None


Message = Union[RoadUserDescription, Subscription, TrajectoryRecommendation, ManeuverFeedback, ErrorMessage]

TYPE_OF = {
    RoadUserDescription: "rud_update",
    Subscription: "subscribe",
    TrajectoryRecommendation: "recommendation",
    ManeuverFeedback: "feedback",
    ErrorMessage: "error",
}
CLASS_OF = {v: k for k, v in TYPE_OF.items()}


# ---------------------------------------------------------------------------
# payload validation


def _str(d, k, optional=False):
    v = d.get(k) if optional else _req(d, k)
    if v is None and optional:
        return None
    if not isinstance(v, str):
        raise ProtocolError("invalid", f"{k} must be a string")
    return v


def _req(d, k):
    if k not in d:
        raise ProtocolError("invalid", f"missing field {k!r}")
    return d[k]


def _int(d, k, optional=False):
    v = d.get(k) if optional else _req(d, k)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProtocolError("invalid", f"{k} must be an integer")
    return v


def _stamp(d, k):
    v = _int(d, k)
    if not 0 < v <= MAX_TIMESTAMP:
        raise ProtocolError("invalid", f"{k} outside 1..2^53-1")
    return v


def _num(d, k):
    v = _req(d, k)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ProtocolError("invalid", f"{k} must be a finite number")
    return float(v)


def _bool(d, k, default=None):
    v = d.get(k, default)
    if not isinstance(v, bool):
        raise ProtocolError("invalid", f"{k} must be a boolean")
    return v


def _obj(v, what):
    if not isinstance(v, dict):
        raise ProtocolError("invalid", f"{what} must be an object")
    return v


def _build(cls, **kw):
    try:
        return cls(**kw)
    except ValueError as exc:
        raise ProtocolError("invalid", str(exc)) from None


def _decode_rud(p):
    return _build(
        RoadUserDescription,
        user_id=_str(p, "user_id"), timestamp=_stamp(p, "timestamp"),
        x=_num(p, "x"), y=_num(p, "y"), speed=_num(p, "speed"),
        acceleration=_num(p, "acceleration"), heading=normalize_heading(_num(p, "heading")),
        lane_id=_int(p, "lane_id"), length=_num(p, "length"), width=_num(p, "width"),
        connected=_bool(p, "connected", True), source=_str(p, "source", optional=True) or "vehicle",
    )


def _decode_subscription(p):
    region = p.get("region")
    if region is not None:
        r = _obj(region, "region")
        region = _build(Region, x_min=_num(r, "x_min"), x_max=_num(r, "x_max"),
                        y_min=_num(r, "y_min"), y_max=_num(r, "y_max"))
    return _build(Subscription, user_id=_str(p, "user_id"), target_lane=_int(p, "target_lane"),
                  target_x=_num(p, "target_x"), region=region)


def _decode_recommendation(p):
    wps = _req(p, "waypoints")
    if not isinstance(wps, list):
        raise ProtocolError("invalid", "waypoints must be a list")
    waypoints = tuple(
        Waypoint(_stamp(w, "timestamp"), _num(w, "x"), _num(w, "y"), _num(w, "speed"),
                 _num(w, "acceleration"), normalize_heading(_num(w, "heading")))
        for w in (_obj(w, "waypoint") for w in wps)
    )
    return _build(TrajectoryRecommendation, recommendation_id=_str(p, "recommendation_id"),
                  user_id=_str(p, "user_id"), waypoints=waypoints, merge_flag=_bool(p, "merge_flag"),
                  source_timestamp=_stamp(p, "source_timestamp"),
                  target_index=_int(p, "target_index", optional=True))


def _decode_feedback(p):
    return _build(ManeuverFeedback, recommendation_id=_str(p, "recommendation_id"),
                  user_id=_str(p, "user_id"), verdict=_str(p, "verdict"))


def _decode_error(p):
    return _build(ErrorMessage, code=_str(p, "code"), message=_str(p, "message"),
                  ref=_str(p, "ref", optional=True))


_DECODERS = {
    "rud_update": _decode_rud,
    "subscribe": _decode_subscription,
    "recommendation": _decode_recommendation,
    "feedback": _decode_feedback,
    "error": _decode_error,
}


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name}")


def decode_message(frame: bytes) -> Message:
    """Parse one frame (with or without its trailing newline) into a typed message."""
    if frame.endswith(b"\n"):
        frame = frame[:-1]
    if b"\n" in frame:
        raise FramingError("embedded newline in frame")
    if len(frame) > MAX_FRAME:
        raise FramingError("frame too large")
    try:
        obj = json.loads(frame.decode("utf-8"), parse_constant=_reject_constant)
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise FramingError(f"undecodable frame: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("invalid", "frame must be a JSON object")
    mtype = obj.get("type")
    if not isinstance(mtype, str):
        raise ProtocolError("invalid", "missing message type")
    version = obj.get("version")
    if version != VERSION or isinstance(version, bool):
        raise ProtocolError("unsupported_version", f"unsupported version {version!r}")
    if mtype not in _DECODERS:
        raise ProtocolError("unknown_type", f"unknown message type {mtype!r}")
    return _DECODERS[mtype](_obj(obj.get("payload"), "payload"))


def _payload(entity) -> dict:
    out = {}
    for f in fields(entity):
        v = getattr(entity, f.name)
        if isinstance(v, Region):
            v = {g.name: getattr(v, g.name) for g in fields(v)}
        elif f.name == "waypoints":
            v = [{g.name: getattr(w, g.name) for g in fields(w)} for w in v]
        out[f.name] = v
    return out


def encode_message(entity: Message) -> bytes:
    try:
        mtype = TYPE_OF[type(entity)]
    except KeyError:
        raise TypeError(f"cannot encode {type(entity).__name__}") from None
    body = {"type": mtype, "version": VERSION, "payload": _payload(entity)}
    return json.dumps(body, separators=(",", ":"), allow_nan=False).encode("utf-8") + b"\n"


def error_for(exc: ProtocolError) -> ErrorMessage:
    return ErrorMessage(exc.code, exc.message, exc.ref)


class FrameBuffer:
    """Splits a byte stream into newline-terminated frames."""

    def __init__(self, max_frame: int = MAX_FRAME):
        self.max_frame = max_frame
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        frames = []
        while True:
            i = self._buf.find(b"\n")
            if i < 0:
                break
            frames.append(bytes(self._buf[: i + 1]))
            del self._buf[: i + 1]
        if len(self._buf) > self.max_frame:
            self._buf.clear()
            raise FramingError("frame exceeds maximum size")
        return frames

    @property
    def pending(self) -> bytes:
        return bytes(self._buf)
