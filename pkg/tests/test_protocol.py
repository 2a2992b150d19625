import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanemerge.orchestrator.protocol import (MAX_FRAME, ErrorMessage, FrameBuffer, FramingError,
                                             ManeuverFeedback, ProtocolError, Region, RoadUserDescription,
                                             Subscription, TrajectoryRecommendation, Waypoint, decode_message,
                                             encode_message, error_for)

RUD = RoadUserDescription("M", 1_000, 1.8, 120.0, 25.0, 0.5, 90.0, 2, 4.5, 1.8)

finite = st.floats(-1e6, 1e6, allow_nan=False)
positive = st.floats(0.1, 50)
ids = st.text(min_size=1, max_size=12)
stamps = st.integers(1, 2 ** 53 - 10_000)
headings = st.floats(0, 359.999)

ruds = st.builds(RoadUserDescription, ids, stamps, finite, finite, st.floats(0, 80), finite, headings,
                 st.integers(-5, 10), positive, positive, st.booleans(), st.sampled_from(["vehicle", "perception"]))
regions = st.one_of(st.none(), st.tuples(finite, finite, finite, finite).map(
    lambda t: Region(min(t[0], t[1]), max(t[0], t[1]), min(t[2], t[3]), max(t[2], t[3]))))
subscriptions = st.builds(Subscription, ids, st.integers(0, 8), finite, regions)


@st.composite
def recommendations(draw):
    n = draw(st.integers(0, 30))
    t0 = draw(stamps)
    wps = tuple(Waypoint(t0 + 100 * i, draw(finite), draw(finite), draw(st.floats(0, 80)), draw(finite),
                         draw(headings)) for i in range(n))
    return TrajectoryRecommendation(draw(ids), draw(ids), wps, draw(st.booleans()), t0,
                                    draw(st.one_of(st.none(), st.integers(0, 29))))


feedbacks = st.builds(ManeuverFeedback, ids, ids, st.sampled_from(["accept", "reject", "abort"]))
errors = st.builds(ErrorMessage, ids, st.text(max_size=40), st.one_of(st.none(), ids))


@pytest.mark.parametrize("strategy", [ruds, subscriptions, recommendations(), feedbacks, errors],
                         ids=["rud", "subscribe", "recommendation", "feedback", "error"])
@settings(max_examples=150)
@given(data=st.data())
def test_round_trip(strategy, data):
    msg = data.draw(strategy)
    frame = encode_message(msg)
    assert frame.endswith(b"\n") and frame.count(b"\n") == 1
    assert decode_message(frame) == msg


def test_envelope_shape():
    obj = json.loads(encode_message(RUD))
    assert obj["type"] == "rud_update" and obj["version"] == 1
    assert obj["payload"]["user_id"] == "M"


def test_heading_normalized_on_decode():
    obj = json.loads(encode_message(RUD))
    obj["payload"]["heading"] = -90.0
    assert decode_message(json.dumps(obj).encode()).heading == 270.0


def frame(obj):
    return json.dumps(obj).encode() + b"\n"


def rud_obj(**over):
    obj = json.loads(encode_message(RUD))
    obj["payload"].update(over)
    return obj


@pytest.mark.parametrize("raw,code", [
    (b"{not json\n", "framing"),
    (b"\xff\xfe\n", "framing"),
    (b"[1, 2]\n", "invalid"),
    (frame({"version": 1, "payload": {}}), "invalid"),
    (frame({"type": "rud_update", "version": 2, "payload": {}}), "unsupported_version"),
    (frame({"type": "rud_update", "version": True, "payload": {}}), "unsupported_version"),
    (frame({"type": "teleport", "version": 1, "payload": {}}), "unknown_type"),
    (frame({"type": "rud_update", "version": 1, "payload": []}), "invalid"),
    (frame(rud_obj(speed=-1.0)), "invalid"),
    (frame(rud_obj(timestamp=1.5)), "invalid"),
    (frame(rud_obj(timestamp=0)), "invalid"),
    (frame(rud_obj(timestamp=2 ** 53)), "invalid"),
    (frame(rud_obj(lane_id=True)), "invalid"),
    (frame(rud_obj(source="satellite")), "invalid"),
    (b'{"type":"rud_update","version":1,"payload":{"x":NaN}}\n', "framing"),
])
def test_malformed_frames(raw, code):
    with pytest.raises(ProtocolError) as exc:
        decode_message(raw)
    assert exc.value.code == code
    assert error_for(exc.value).code == code


def test_missing_field_named():
    obj = rud_obj()
    del obj["payload"]["width"]
    with pytest.raises(ProtocolError, match="width"):
        decode_message(frame(obj))


def test_oversized_frame():
    with pytest.raises(FramingError):
        decode_message(b" " * (MAX_FRAME + 1) + b"{}")


def test_waypoint_ordering_enforced():
    wps = (Waypoint(200, 0, 0, 1, 0, 90), Waypoint(100, 0, 1, 1, 0, 90))
    with pytest.raises(ValueError):
        TrajectoryRecommendation("r", "M", wps, False, 100)


def test_encode_rejects_foreign_objects():
    with pytest.raises(TypeError):
        encode_message({"type": "rud_update"})


def test_frame_buffer_reassembly():
    data = encode_message(RUD) * 3
    buf = FrameBuffer()
    out = []
    for i in range(0, len(data), 7):
        out += buf.feed(data[i:i + 7])
    assert [decode_message(f) for f in out] == [RUD] * 3
    assert buf.pending == b""


def test_frame_buffer_overflow():
    buf = FrameBuffer(max_frame=16)
    with pytest.raises(FramingError):
        buf.feed(b"x" * 17)
    assert buf.feed(b"{}\n") == [b"{}\n"]


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_arbitrary_bytes_never_crash(raw):
    try:
        decode_message(raw)
    except ProtocolError:
        pass


@settings(max_examples=300)
@given(st.recursive(st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(),
                    lambda c: st.lists(c, max_size=4) | st.dictionaries(st.text(max_size=8), c, max_size=4)))
def test_arbitrary_json_payload_never_crashes(payload):
    for t in ("rud_update", "subscribe", "recommendation", "feedback", "error"):
        try:
            decode_message(frame({"type": t, "version": 1, "payload": payload}))
        except ProtocolError:
            pass
