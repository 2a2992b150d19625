"""Service configuration: INI file ``[orchestrator]`` section (and the shared
``[safety]`` clearance factor) plus environment overrides.

Environment variables (take precedence over the file):
``LANEMERGE_LISTEN`` (host:port), ``LANEMERGE_STALENESS_MS``, ``LANEMERGE_MODEL``,
``LANEMERGE_CLEARANCE_FACTOR``.  See ``docs/orchestrator.ini`` for a commented example.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .knowledge import DEFAULT_HORIZON_MS


@dataclass(frozen=True)
class OrchestratorConfig:
    host: str = "127.0.0.1"
    port: int = 7400
    staleness_ms: int = DEFAULT_HORIZON_MS
    model_path: str | None = None
    clearance_factor: float = 0.1
    horizon_s: float = 3.0

    @property
    def listen(self) -> str:
        return f"{self.host}:{self.port}"


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep:
        raise ValueError(f"listen address must be host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> OrchestratorConfig:
    env = os.environ if env is None else env
    cfg = OrchestratorConfig()
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not cp.read(path):
            raise FileNotFoundError(path)
        sec = cp["orchestrator"] if cp.has_section("orchestrator") else {}
        changes = {}
        if "listen" in sec:
            changes["host"], changes["port"] = parse_listen(sec["listen"])
        if "staleness_ms" in sec:
            changes["staleness_ms"] = int(sec["staleness_ms"])
        if "model" in sec:
            changes["model_path"] = sec["model"]
        if "horizon_s" in sec:
            changes["horizon_s"] = float(sec["horizon_s"])
        if cp.has_section("safety") and "clearance_factor" in cp["safety"]:
            changes["clearance_factor"] = cp["safety"].getfloat("clearance_factor")
        cfg = replace(cfg, **changes)
    if "LANEMERGE_LISTEN" in env:
        host, port = parse_listen(env["LANEMERGE_LISTEN"])
        cfg = replace(cfg, host=host, port=port)
    if "LANEMERGE_STALENESS_MS" in env:
        cfg = replace(cfg, staleness_ms=int(env["LANEMERGE_STALENESS_MS"]))
    if "LANEMERGE_MODEL" in env:
        cfg = replace(cfg, model_path=env["LANEMERGE_MODEL"])
    if "LANEMERGE_CLEARANCE_FACTOR" in env:
        cfg = replace(cfg, clearance_factor=float(env["LANEMERGE_CLEARANCE_FACTOR"]))
    return cfg
