"""Message handling independent of transport: the orchestrator's exchange logic."""

from __future__ import annotations

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable

from ..labeler import SafetyConfig
from ..ml.models import ModelBundle
from .knowledge import KnowledgeBase
from .planner import PlannerSettings, PlanningError, plan_merge
from .protocol import (ManeuverFeedback, Message, ProtocolError, RoadUserDescription,
                       Subscription, TrajectoryRecommendation)

log = logging.getLogger(__name__)

Session = Hashable


@dataclass
class _Active:
    subscription: Subscription
    session: Session


class Orchestrator:
    """Routes decoded messages: descriptions go to the knowledge base and
    trigger a re-plan for subscribed merging vehicles; feedback may trigger a
    re-plan.  ``handle`` returns ``(session, message)`` pairs to send."""

    def __init__(self, bundle: ModelBundle | None, cfg: SafetyConfig = SafetyConfig(),
                 kb: KnowledgeBase | None = None, settings: PlannerSettings = PlannerSettings()):
        self.bundle = bundle
        self.cfg = cfg
        self.kb = kb if kb is not None else KnowledgeBase()
        self.settings = settings
        self.active: dict[str, _Active] = {}
        self.issued: dict[str, TrajectoryRecommendation] = {}
        self.feedback_log: list[ManeuverFeedback] = []
        self._seq = 0
        self._lock = threading.Lock()
        self._plan_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def handle(self, msg: Message, session: Session) -> list[tuple[Session, Message]]:
        if isinstance(msg, RoadUserDescription):
            return self._on_rud(msg)
        if isinstance(msg, Subscription):
            return self._on_subscribe(msg, session)
        if isinstance(msg, ManeuverFeedback):
            _, rec = self.handle_feedback(msg)
            if rec is None:
                return []
            return [(self.active[msg.user_id].session, rec)] if msg.user_id in self.active else [(session, rec)]
        raise ProtocolError("unexpected_type", f"{type(msg).__name__} is not accepted by the orchestrator")

    def drop_session(self, session: Session) -> None:
        with self._lock:
            for uid in [u for u, a in self.active.items() if a.session == session]:
                del self.active[uid]

    def _on_subscribe(self, sub: Subscription, session: Session):
        with self._lock:
            self.active[sub.user_id] = _Active(sub, session)
        if self.kb.get(sub.user_id) is None:
            return []
        rec = self._try_plan(sub.user_id)
        return [(session, rec)] if rec else []

    def _on_rud(self, rud: RoadUserDescription):
        fresh = self.kb.upsert(rud)
        act = self.active.get(rud.user_id)
        if act is None or not fresh:
            return []
        rec = self._try_plan(rud.user_id)
        return [(act.session, rec)] if rec else []

    def _next_id(self, user_id: str, ts: int) -> str:
        with self._lock:
            self._seq += 1
            return f"{user_id}-{ts}-{self._seq}"

    def plan(self, user_id: str) -> TrajectoryRecommendation:
        act = self.active.get(user_id)
        if act is None:
            raise PlanningError(f"{user_id!r} has no active subscription")
        sub = act.subscription
        with self._plan_locks[user_id]:
            snap = self.kb.snapshot(sub.region)
            m = next((r for r in snap if r.user_id == user_id), None)
            rid = self._next_id(user_id, m.timestamp if m else 0)
            rec = plan_merge(snap, user_id, self.bundle, self.cfg, sub.target_lane, sub.target_x, rid,
                             self.settings)
        with self._lock:
            self.issued[rec.recommendation_id] = rec
        return rec

    def _try_plan(self, user_id: str) -> TrajectoryRecommendation | None:
        try:
            return self.plan(user_id)
        except PlanningError as exc:
            log.warning("planning for %s failed: %s", user_id, exc)
            return None

    def handle_feedback(self, fb: ManeuverFeedback) -> tuple[str, TrajectoryRecommendation | None]:
        """``("none", None)`` on accept; ``("recompute", rec)`` on reject/abort,
        with ``rec`` None when re-planning is impossible."""
        if fb.recommendation_id not in self.issued:
            raise ProtocolError("unknown_recommendation",
                                f"unknown recommendation {fb.recommendation_id!r}", ref=fb.recommendation_id)
        self.feedback_log.append(fb)
        if fb.verdict == "accept":
            return "none", None
        return "recompute", self._try_plan(fb.user_id)
