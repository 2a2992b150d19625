import json
import socket
import time

import pytest

from lanemerge.orchestrator.protocol import (MAX_FRAME, ManeuverFeedback, RoadUserDescription, Subscription,
                                             decode_message, encode_message)
from lanemerge.orchestrator.server import OrchestratorServer
from lanemerge.orchestrator.service import Orchestrator

from stubs import stub_bundle

M = RoadUserDescription("M", 10_000, 5.55, 100.0, 25.0, 0.0, 90.0, 2, 4.5, 1.8)


def eventually(cond, timeout=2.0):
    end = time.monotonic() + timeout
    while not cond():
        if time.monotonic() > end:
            return False
        time.sleep(0.005)
    return True


@pytest.fixture
def server():
    with OrchestratorServer(Orchestrator(stub_bundle())) as srv:
        yield srv


class Client:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5)
        self.file = self.sock.makefile("rb")

    def send(self, data: bytes):
        self.sock.sendall(data)

    def recv(self):
        return decode_message(self.file.readline())

    def close(self):
        self.file.close()
        self.sock.close()


@pytest.fixture
def client(server):
    c = Client(server.port)
    yield c
    c.close()


def test_subscribe_and_receive(client):
    client.send(encode_message(Subscription("M", 1, 1.85)) + encode_message(M))
    rec = client.recv()
    assert rec.user_id == "M" and len(rec.waypoints) == 30


def test_malformed_frames_get_errors_and_session_survives(client, server):
    client.send(b"{oops\n")
    assert client.recv().code == "framing"
    client.send(json.dumps({"type": "warp", "version": 1, "payload": {}}).encode() + b"\n")
    assert client.recv().code == "unknown_type"
    client.send(json.dumps({"type": "rud_update", "version": 9, "payload": {}}).encode() + b"\n")
    assert client.recv().code == "unsupported_version"
    client.send(b"\n\n")  # blank lines are ignored
    client.send(encode_message(ManeuverFeedback("r-1", "M", "reject")))
    err = client.recv()
    assert err.code == "unknown_recommendation" and err.ref == "r-1"
    client.send(encode_message(Subscription("M", 1, 1.85)) + encode_message(M))
    assert client.recv().user_id == "M"
    assert server.errors == 4


def test_oversized_frame(client):
    client.send(b"x" * (MAX_FRAME + 100) + b"\n")
    assert client.recv().code == "framing"
    client.send(encode_message(Subscription("M", 1, 1.85)) + encode_message(M))
    assert client.recv().user_id == "M"


def test_recommendation_goes_to_subscriber_only(server):
    sub, feeder = Client(server.port), Client(server.port)
    try:
        sub.send(encode_message(Subscription("M", 1, 1.85)))
        feeder.send(encode_message(M))
        assert sub.recv().user_id == "M"
        feeder.sock.settimeout(0.3)
        with pytest.raises(socket.timeout):
            feeder.file.readline()
    finally:
        sub.close()
        feeder.close()


def test_disconnect_drops_subscription(server):
    c = Client(server.port)
    c.send(encode_message(Subscription("M", 1, 1.85)))
    assert eventually(lambda: "M" in server.orchestrator.active)
    c.close()
    assert eventually(lambda: "M" not in server.orchestrator.active)
    other = Client(server.port)
    try:
        other.send(encode_message(M))
        other.sock.settimeout(0.3)
        with pytest.raises(socket.timeout):
            other.file.readline()
    finally:
        other.close()


def test_processing_time_recorded(client, server):
    client.send(encode_message(Subscription("M", 1, 1.85)) + encode_message(M))
    client.recv()
    assert eventually(lambda: len(server.processing_ms) == 1)
    assert server.processing_ms[0] > 0


# -- configuration ------------------------------------------------------------


def test_example_config_parses():
    from pathlib import Path

    from lanemerge.orchestrator.config import load_config
    ini = Path(__file__).parents[1] / "docs" / "orchestrator.ini"
    cfg = load_config(ini, env={})
    assert (cfg.host, cfg.port, cfg.staleness_ms) == ("127.0.0.1", 7400, 1000)
    assert cfg.clearance_factor == 0.1 and cfg.horizon_s == 3.0
    assert cfg.model_path == "models/bundle.json.gz"


def test_env_overrides_file(tmp_path):
    from lanemerge.orchestrator.config import load_config
    ini = tmp_path / "o.ini"
    ini.write_text("[orchestrator]\nlisten = 0.0.0.0:9000\nstaleness_ms = 500\n[safety]\nclearance_factor = 0.3\n")
    assert load_config(ini, env={}).clearance_factor == 0.3
    cfg = load_config(ini, env={"LANEMERGE_LISTEN": ":7500", "LANEMERGE_CLEARANCE_FACTOR": "0.2",
                                "LANEMERGE_MODEL": "m.json"})
    assert (cfg.host, cfg.port, cfg.staleness_ms) == ("127.0.0.1", 7500, 500)
    assert cfg.clearance_factor == 0.2 and cfg.model_path == "m.json"


def test_config_errors(tmp_path):
    from lanemerge.orchestrator.config import load_config, parse_listen
    with pytest.raises(ValueError):
        parse_listen("7400")
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.ini", env={})
