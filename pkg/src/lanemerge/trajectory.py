"""Highway trajectory ingestion, lane-change detection and scenario windowing.

Input files follow the column layout of the US-101 / I-80 trajectory releases
(18 columns, imperial units).  Everything downstream of :func:`parse_trajectory_file`
works in metres and seconds, with ``y`` the longitudinal axis and ``x`` the
lateral one.  Positions are vehicle centres: the raw ``Local_Y`` column marks
the front bumper and is shifted back by half the vehicle length on parse.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

log = logging.getLogger(__name__)

FT = 0.3048
DT = 0.1
WINDOW_BEFORE = 40
WINDOW_AFTER = 30
WINDOW_LEN = WINDOW_BEFORE + WINDOW_AFTER

COLUMNS = (
    "Vehicle_ID", "Frame_ID", "Total_Frames", "Global_Time", "Local_X", "Local_Y",
    "Global_X", "Global_Y", "v_Length", "v_Width", "v_Class", "v_Vel", "v_Acc",
    "Lane_ID", "Preceding", "Following", "Space_Headway", "Time_Headway",
)


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def tick(t: float) -> int:
    """Index of ``t`` on the 0.1 s grid."""
    return int(round(t / DT))


@dataclass(frozen=True)
class TrajectorySample:
    vehicle_id: int | str
    timestamp: float
    x: float
    y: float
    lane_id: int
    speed: float
    acceleration: float
    length: float
    width: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"negative speed {self.speed}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"non-positive dimensions {self.length}x{self.width}")

    @property
    def front(self) -> float:
        return self.y + self.length / 2

    @property
    def rear(self) -> float:
        return self.y - self.length / 2

    def as_row(self) -> list:
        return [self.timestamp, self.x, self.y, self.lane_id, self.speed,
                self.acceleration, self.length, self.width]

    @classmethod
    def from_row(cls, vehicle_id, row: Sequence) -> "TrajectorySample":
        t, x, y, lane, v, a, length, width = row
        return cls(vehicle_id, float(t), float(x), float(y), int(lane), float(v),
                   float(a), float(length), float(width))


@dataclass(frozen=True)
class VehicleTrack:
    vehicle_id: int | str
    samples: tuple[TrajectorySample, ...]

    def __post_init__(self):
        for a, b in zip(self.samples, self.samples[1:]):
            if not b.timestamp > a.timestamp:
                raise ValueError(f"vehicle {self.vehicle_id}: timestamps not strictly increasing")
        if any(s.vehicle_id != self.vehicle_id for s in self.samples):
            raise ValueError(f"vehicle {self.vehicle_id}: mixed vehicle ids")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def _by_tick(self) -> dict[int, int]:
        return {tick(s.timestamp): i for i, s in enumerate(self.samples)}

    def index_at(self, k: int) -> int | None:
        return self._by_tick.get(k)

    def sample_at(self, k: int, interpolate: bool = True) -> TrajectorySample | None:
        """Sample at grid tick ``k``; gaps inside the track are linearly interpolated."""
        i = self._by_tick.get(k)
        if i is not None:
            return self.samples[i]
        if not interpolate or not self.samples:
            return None
        t = k * DT
        if t < self.samples[0].timestamp or t > self.samples[-1].timestamp:
            return None
        lo, hi = 0, len(self.samples) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.samples[mid].timestamp <= t:
                lo = mid
            else:
                hi = mid
        return _lerp(self.samples[lo], self.samples[hi], t)


def _lerp(a: TrajectorySample, b: TrajectorySample, t: float) -> TrajectorySample:
    w = (t - a.timestamp) / (b.timestamp - a.timestamp)

    def mix(u, v):
        return u + w * (v - u)

    return TrajectorySample(
        a.vehicle_id, t, mix(a.x, b.x), mix(a.y, b.y), a.lane_id if w < 1 else b.lane_id,
        max(0.0, mix(a.speed, b.speed)), mix(a.acceleration, b.acceleration),
        mix(a.length, b.length), mix(a.width, b.width),
    )


@dataclass(frozen=True)
class LaneChangeEvent:
    vehicle_id: int | str
    event_index: int
    from_lane: int
    to_lane: int
    event_time: float

    def __post_init__(self):
        if self.from_lane == self.to_lane:
            raise ValueError("lane change must change lanes")
        if self.event_index < 1:
            raise ValueError("event_index must be >= 1")


@dataclass(frozen=True)
class ScenarioWindow:
    """70 samples of the merging vehicle M around a lane change, with the
    preceding (P) and following (F) vehicles of the target lane aligned to
    the same grid.  Neighbour tuples are empty when the neighbour is absent,
    otherwise length 70 with ``None`` where the neighbour is not observed."""

    event: LaneChangeEvent
    m_samples: tuple[TrajectorySample, ...]
    p_samples: tuple[TrajectorySample | None, ...] = ()
    f_samples: tuple[TrajectorySample | None, ...] = ()
    p_id: int | str | None = None
    f_id: int | str | None = None

    def __post_init__(self):
        if len(self.m_samples) != WINDOW_LEN:
            raise ValueError(f"window needs {WINDOW_LEN} M samples, got {len(self.m_samples)}")
        for nb in (self.p_samples, self.f_samples):
            if nb and len(nb) != WINDOW_LEN:
                raise ValueError("neighbour samples must be aligned to the M grid")

    def p_at(self, i: int) -> TrajectorySample | None:
        return self.p_samples[i] if self.p_samples else None

    def f_at(self, i: int) -> TrajectorySample | None:
        return self.f_samples[i] if self.f_samples else None


@dataclass(frozen=True)
class SkippedWindow:
    event: LaneChangeEvent
    reason: str  # insufficient_history | insufficient_future | missing_samples


# ---------------------------------------------------------------------------
# parsing


def _split(line: str, delim: str | None) -> list[str]:
    return [c for c in line.split(delim)] if delim else line.split()


def parse_trajectory_file(path: str | Path, format: str = "ngsim") -> dict[int | str, VehicleTrack]:
    """Read a raw trajectory file into one :class:`VehicleTrack` per vehicle.

    Comma- and whitespace-delimited files are both accepted; a header row is
    skipped when its first field is not numeric.  Tracks not on the 0.1 s grid
    are resampled onto it.
    """
    if format != "ngsim":
        raise ValueError(f"unsupported trajectory format {format!r}")
    rows: dict[int | str, list[TrajectorySample]] = defaultdict(list)
    delim: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if delim is None:
                delim = "," if "," in line else ""
            cells = _split(line, delim or None)
            try:
                float(cells[0])
            except ValueError:
                if lineno == 1 or not rows:
                    continue  # header
                raise ParseError(lineno, f"non-numeric vehicle id {cells[0]!r}")
            if len(cells) < len(COLUMNS):
                raise ParseError(lineno, f"expected {len(COLUMNS)} columns, got {len(cells)}")
            try:
                vid = int(float(cells[0]))
                t = float(cells[3]) / 1000.0
                length = float(cells[8]) * FT
                width = float(cells[9]) * FT
                sample = TrajectorySample(
                    vehicle_id=vid,
                    timestamp=t,
                    x=float(cells[4]) * FT,
                    y=float(cells[5]) * FT - length / 2,
                    lane_id=int(float(cells[13])),
                    speed=float(cells[11]) * FT,
                    acceleration=float(cells[12]) * FT,
                    length=length,
                    width=width,
                )
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            rows[vid].append(sample)

    tracks = {}
    for vid, samples in rows.items():
        samples.sort(key=lambda s: s.timestamp)
        deduped = [samples[0]]
        for s in samples[1:]:
            if s.timestamp == deduped[-1].timestamp:
                log.warning("vehicle %s: duplicate timestamp %.1f dropped", vid, s.timestamp)
                continue
            deduped.append(s)
        tracks[vid] = resample_track(VehicleTrack(vid, tuple(deduped)))
    return tracks


def _on_grid(track: VehicleTrack) -> bool:
    return all(abs(s.timestamp / DT - tick(s.timestamp)) < 1e-6 for s in track.samples)


def resample_track(track: VehicleTrack) -> VehicleTrack:
    """Linearly interpolate an off-grid track onto the 0.1 s grid (no-op when on-grid)."""
    if len(track) < 2 or _on_grid(track):
        return track
    first = math.ceil(track.samples[0].timestamp / DT - 1e-9)
    last = math.floor(track.samples[-1].timestamp / DT + 1e-9)
    out = []
    j = 0
    for k in range(first, last + 1):
        t = k * DT
        while j + 1 < len(track) - 1 and track.samples[j + 1].timestamp <= t:
            j += 1
        a, b = track.samples[j], track.samples[j + 1]
        s = _lerp(a, b, min(max(t, a.timestamp), b.timestamp))
        out.append(TrajectorySample(s.vehicle_id, round(t, 6), s.x, s.y, s.lane_id, s.speed,
                                    s.acceleration, s.length, s.width))
    return VehicleTrack(track.vehicle_id, tuple(out))


def write_trajectory_file(tracks: Iterable[VehicleTrack], path: str | Path) -> None:
    """Write tracks back in the raw 18-column layout (feet, milliseconds)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for track in tracks:
            n = len(track)
            for s in track.samples:
                y_front = (s.y + s.length / 2) / FT
                fh.write(",".join([
                    str(s.vehicle_id), str(tick(s.timestamp)), str(n), str(int(round(s.timestamp * 1000))),
                    f"{s.x / FT:.6f}", f"{y_front:.6f}", f"{s.x / FT:.6f}", f"{y_front:.6f}",
                    f"{s.length / FT:.6f}", f"{s.width / FT:.6f}", "2",
                    f"{s.speed / FT:.6f}", f"{s.acceleration / FT:.6f}", str(s.lane_id),
                    "0", "0", "0.00", "0.00",
                ]) + "\n")


# ---------------------------------------------------------------------------
# events and windows


def detect_lane_changes(track: VehicleTrack) -> list[LaneChangeEvent]:
    s = track.samples
    return [
        LaneChangeEvent(track.vehicle_id, i, s[i - 1].lane_id, s[i].lane_id, s[i].timestamp)
        for i in range(1, len(s))
        if s[i].lane_id != s[i - 1].lane_id
    ]


def extract_window(track: VehicleTrack, event: LaneChangeEvent) -> ScenarioWindow | SkippedWindow:
    """Cut the 4 s before / 3 s after window around ``event`` (40 + 30 samples)."""
    k0 = tick(event.event_time)
    first, last = k0 - WINDOW_BEFORE, k0 + WINDOW_AFTER - 1
    samples = track.samples
    if not samples or tick(samples[0].timestamp) > first:
        return SkippedWindow(event, "insufficient_history")
    if tick(samples[-1].timestamp) < last:
        return SkippedWindow(event, "insufficient_future")
    picked = []
    for k in range(first, last + 1):
        i = track.index_at(k)
        if i is None:
            return SkippedWindow(event, "missing_samples")
        picked.append(samples[i])
    return ScenarioWindow(event=event, m_samples=tuple(picked))


def assign_neighbors(all_tracks: Mapping[int | str, VehicleTrack] | Iterable[VehicleTrack],
                     window: ScenarioWindow) -> ScenarioWindow:
    """Fill in P (nearest ahead) and F (nearest behind) in the target lane at event time."""
    tracks = all_tracks.values() if isinstance(all_tracks, Mapping) else all_tracks
    ev = window.event
    k0 = tick(ev.event_time)
    m0 = window.m_samples[WINDOW_BEFORE]
    ahead: tuple[float, VehicleTrack] | None = None
    behind: tuple[float, VehicleTrack] | None = None
    for tr in tracks:
        if tr.vehicle_id == ev.vehicle_id:
            continue
        s = tr.sample_at(k0)
        if s is None or s.lane_id != ev.to_lane:
            continue
        dy = s.y - m0.y
        if dy > 0 and (ahead is None or dy < ahead[0]):
            ahead = (dy, tr)
        elif dy < 0 and (behind is None or dy > behind[0]):
            behind = (dy, tr)

    ticks = [tick(s.timestamp) for s in window.m_samples]

    def aligned(tr: VehicleTrack | None) -> tuple:
        return tuple(tr.sample_at(k) for k in ticks) if tr is not None else ()

    p_tr = ahead[1] if ahead else None
    f_tr = behind[1] if behind else None
    return ScenarioWindow(
        event=ev, m_samples=window.m_samples,
        p_samples=aligned(p_tr), f_samples=aligned(f_tr),
        p_id=p_tr.vehicle_id if p_tr else None, f_id=f_tr.vehicle_id if f_tr else None,
    )


@dataclass
class ExtractionStats:
    events: int = 0
    windows: int = 0
    skipped: dict[str, int] = field(default_factory=dict)


def extract_scenarios(tracks: Mapping[int | str, VehicleTrack],
                      stats: ExtractionStats | None = None) -> list[ScenarioWindow]:
    """Run detection, windowing and neighbour assignment over every track."""
    stats = stats if stats is not None else ExtractionStats()
    out = []
    for vid in sorted(tracks, key=str):
        track = tracks[vid]
        for ev in detect_lane_changes(track):
            stats.events += 1
            w = extract_window(track, ev)
            if isinstance(w, SkippedWindow):
                stats.skipped[w.reason] = stats.skipped.get(w.reason, 0) + 1
                continue
            out.append(assign_neighbors(tracks, w))
            stats.windows += 1
    return out


# ---------------------------------------------------------------------------
# window file: one JSON object per line
#   {"event": {vehicle_id, event_index, from_lane, to_lane, event_time},
#    "m": [[t, x, y, lane, speed, acc, length, width], ... 70 rows],
#    "p_id": id|null, "p": [row|null, ...] (70 or empty), "f_id", "f": same}


def window_to_record(w: ScenarioWindow) -> dict:
    ev = w.event
    return {
        "event": {"vehicle_id": ev.vehicle_id, "event_index": ev.event_index,
                  "from_lane": ev.from_lane, "to_lane": ev.to_lane, "event_time": ev.event_time},
        "m": [s.as_row() for s in w.m_samples],
        "p_id": w.p_id,
        "p": [s.as_row() if s else None for s in w.p_samples],
        "f_id": w.f_id,
        "f": [s.as_row() if s else None for s in w.f_samples],
    }


def window_from_record(rec: dict) -> ScenarioWindow:
    ev = LaneChangeEvent(**rec["event"])

    def rows(vid, data):
        return tuple(TrajectorySample.from_row(vid, r) if r is not None else None for r in data)

    return ScenarioWindow(
        event=ev, m_samples=rows(ev.vehicle_id, rec["m"]),
        p_samples=rows(rec["p_id"], rec["p"]), f_samples=rows(rec["f_id"], rec["f"]),
        p_id=rec["p_id"], f_id=rec["f_id"],
    )


def write_windows(windows: Iterable[ScenarioWindow], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps(window_to_record(w), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_windows(path: str | Path) -> Iterator[ScenarioWindow]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield window_from_record(json.loads(line))
