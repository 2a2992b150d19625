from __future__ import annotations

import threading
from typing import Callable

from .protocol import Region, RoadUserDescription

DEFAULT_HORIZON_MS = 1000


class KnowledgeBase:
    """Latest road-user description per id, last-write-wins on timestamp.

    Without a ``clock`` the base runs on stream time: "now" is the newest
    timestamp it has accepted, which keeps replays independent of wall-clock
    pacing.  Entries older than ``horizon_ms`` relative to now are evicted
    whenever the base is read.  A per-id high-water mark survives eviction, so
    a late arrival can never roll an id back in time.
    """

    def __init__(self, horizon_ms: int = DEFAULT_HORIZON_MS, clock: Callable[[], int] | None = None):
        if horizon_ms <= 0:
            raise ValueError("horizon_ms must be positive")
        self.horizon_ms = horizon_ms
        self._clock = clock
        self._entries: dict[str, RoadUserDescription] = {}
        self._high_water: dict[str, int] = {}
        self._stream_now = 0
        self._lock = threading.Lock()

    def now(self) -> int:
        return self._clock() if self._clock is not None else self._stream_now

    def upsert(self, rud: RoadUserDescription) -> bool:
        """Store ``rud`` unless a strictly newer description of the same user was seen."""
        with self._lock:
            if rud.timestamp < self._high_water.get(rud.user_id, -1):
                return False
            self._high_water[rud.user_id] = rud.timestamp
            self._entries[rud.user_id] = rud
            if rud.timestamp > self._stream_now:
                self._stream_now = rud.timestamp
            return True

    def _evict(self) -> None:
        cutoff = self.now() - self.horizon_ms
        stale = [k for k, v in self._entries.items() if v.timestamp < cutoff]
        for k in stale:
            del self._entries[k]

    def get(self, user_id: str) -> RoadUserDescription | None:
        with self._lock:
            self._evict()
            return self._entries.get(user_id)

    def snapshot(self, region: Region | None = None) -> list[RoadUserDescription]:
        """Point-in-time copy of all fresh entries, optionally inside ``region``."""
        with self._lock:
            self._evict()
            return [r for r in self._entries.values() if region is None or region.contains(r.x, r.y)]

    def __len__(self) -> int:
        with self._lock:
            self._evict()
            return len(self._entries)
