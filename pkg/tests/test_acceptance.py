"""Acceptance criteria, one test (or a few) per criterion.

Each test is tagged ``@pytest.mark.criterion(n, title)``; the terminal summary
prints one PASS/FAIL line per criterion along with the measured values.
"""

import csv
import json
import math
import os
import random
import socket
import threading
import time

import numpy as np
import pytest

from lanemerge.harness import BUNDLED_SCENARIO, oracle_check, read_trace, replay
from lanemerge.labeler import (LabeledData, SafetyConfig, acceleration_labels, build_dataset, circle_safety_check,
                               normalize_heading)
from lanemerge.ml.ensemble import GradientBoosting
from lanemerge.ml.metrics import tolerance_accuracy
from lanemerge.ml.models import MERGE_ALGORITHMS, tuned_hyperparameters
from lanemerge.ml.selection import sweep_max_depth
from lanemerge.ml.training import accuracy_table, dataset_splits, fit_and_score
from lanemerge.ml.tree import DecisionTree
from lanemerge.orchestrator.knowledge import KnowledgeBase
from lanemerge.orchestrator.protocol import (ErrorMessage, ManeuverFeedback, ProtocolError, Region,
                                             RoadUserDescription, Subscription, TrajectoryRecommendation, Waypoint,
                                             decode_message, encode_message)
from lanemerge.orchestrator.server import OrchestratorServer
from lanemerge.orchestrator.service import Orchestrator
from lanemerge.synthetic import generate_highway
from lanemerge.trajectory import extract_scenarios, parse_trajectory_file

from conftest import FIXTURE_EVENTS

NGSIM_ENV = "LANEMERGE_NGSIM"


def measured(record, text):
    record("measured", text)


# -- 1 ------------------------------------------------------------------------


@pytest.mark.criterion(1, "oracle equivalence: circle check vs analytic distance predicate")
def test_c1_circle_check_oracle(record_property):
    rng = np.random.default_rng(2024)
    n = 10_000
    mx, my, ox, oy = rng.uniform(-60, 60, (4, n))
    speed = rng.uniform(0, 45, n)                 # m/s
    length = rng.uniform(2, 20, n)
    # analytic predicate, written out independently: centre distance against the radius sum
    radius_sum = 0.1 * speed * 3.6 + length
    expected = np.sqrt((ox - mx) ** 2 + (oy - my) ** 2) > radius_sum

    class B:
        __slots__ = ("x", "y", "speed", "length")

    bodies = []
    for i in range(n):
        m, o = B(), B()
        m.x, m.y, m.speed, m.length = mx[i], my[i], speed[i], 4.5
        o.x, o.y, o.speed, o.length = ox[i], oy[i], 0.0, length[i]
        bodies.append((m, o))
    cfg = SafetyConfig(0.1)
    t0 = time.perf_counter()
    got = np.array([circle_safety_check(m, o, cfg) for m, o in bodies])
    elapsed = time.perf_counter() - t0
    agree = (got == expected).mean()
    measured(record_property, f"agreement {agree:.4%} on {n} configs ({expected.sum()} safe), {elapsed:.3f} s")
    assert agree == 1.0
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------


def naive_label(acc, msp, recs, i):
    if not recs[i]:
        j = next((k for k in range(i, len(acc)) if recs[k]), len(acc) - 1)
        lo, hi = i, j
    else:
        lo, hi = min(i, msp), max(i, msp)
    total = 0.0
    for k in range(lo, hi + 1):
        total += acc[k]
    return total / (hi - lo + 1)


@pytest.mark.criterion(2, "oracle equivalence: prefix-sum labels vs naive averaging; heading periodicity")
def test_c2_label_oracle(record_property):
    rng = random.Random(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        acc = [rng.uniform(-8, 8) for _ in range(70)]
        msp = rng.randrange(70)
        p_true = rng.random()
        recs = [rng.random() < p_true for _ in range(70)]
        labels, _ = acceleration_labels(acc, msp, recs)
        for i in range(70):
            ref = naive_label(acc, msp, recs, i)
            err = abs(labels[i] - ref) / max(abs(ref), 1e-12)
            worst = max(worst, err if abs(ref) > 1e-9 else abs(labels[i] - ref))
    headings_ok = all(
        math.isclose(normalize_heading(a + 360 * k), normalize_heading(a), abs_tol=1e-7)
        or abs(abs(normalize_heading(a + 360 * k) - normalize_heading(a)) - 360) < 1e-7
        for a in (rng.uniform(-1e4, 1e4) for _ in range(2000)) for k in range(-5, 6)
    )
    elapsed = time.perf_counter() - t0
    measured(record_property, f"worst relative error {worst:.2e} over 70,000 labels; periodicity ok "
                              f"{headings_ok}; {elapsed:.2f} s")
    assert worst <= 1e-9
    assert headings_ok
    assert elapsed < 10.0


# -- 3 ------------------------------------------------------------------------


@pytest.mark.criterion(3, "pipeline shape: 70 samples per event and the behind-F rule")
def test_c3_fixture_shape(fixture_windows, fixture_samples, record_property):
    assert len(fixture_windows) == FIXTURE_EVENTS
    assert len(fixture_samples) == 70 * FIXTURE_EVENTS
    behind = 0
    for w in fixture_windows:
        for i in range(70):
            f = w.f_at(i)
            if f is not None and w.m_samples[i].y < f.y:
                behind += 1
    wrong = 0
    by_window = {}
    for s in fixture_samples:
        by_window.setdefault(s.window_id, []).append(s)
    for wid, w in enumerate(fixture_windows):
        for s in by_window[wid]:
            f = w.f_at(s.sample_index)
            if f is not None and w.m_samples[s.sample_index].y < f.y and s.recommendation:
                wrong += 1
    measured(record_property, f"{len(fixture_windows)} events -> {len(fixture_samples)} samples; "
                              f"{behind} behind-F samples, {wrong} labeled true")
    assert behind > 0 and wrong == 0


@pytest.mark.criterion(3, "pipeline shape: 70 samples per event and the behind-F rule")
@pytest.mark.parametrize("events,incomplete", [(1, 0), (7, 2), (20, 5)])
def test_c3_any_event_count(events, incomplete):
    windows = extract_scenarios(generate_highway(events, seed=events, n_incomplete=incomplete))
    assert len(windows) == events
    assert len(build_dataset(windows)) == 70 * events


# -- 4 ------------------------------------------------------------------------


@pytest.mark.criterion(4, "synthetic learnability: forest >= 95% validation, perceptron materially worse")
def test_c4_synthetic_learnability(synthetic_data, record_property):
    assert len(synthetic_data) == 10_000
    t0 = time.perf_counter()
    tags = dataset_splits(synthetic_data, 42)
    rf_hp = tuned_hyperparameters("merge", "random_forest", 42)
    assert rf_hp.n_estimators == 100
    _, rf = fit_and_score("random_forest", "merge", rf_hp, synthetic_data, tags)
    _, pc = fit_and_score("perceptron", "merge", tuned_hyperparameters("merge", "perceptron", 42),
                          synthetic_data, tags)
    elapsed = time.perf_counter() - t0
    measured(record_property, f"forest val {rf.val:.4f}, perceptron val {pc.val:.4f}, {elapsed:.1f} s")
    assert rf.val >= 0.95
    assert rf.val - pc.val >= 0.10   # "materially": at least ten points
    assert elapsed < 120


# -- 5 ------------------------------------------------------------------------


@pytest.mark.criterion(5, "accuracy table on real highway data (ordinal)")
def test_c5_real_data_table(record_property, tmp_path):
    paths = [p for p in os.environ.get(NGSIM_ENV, "").split(os.pathsep) if p]
    if not paths:
        pytest.skip(f"set {NGSIM_ENV} to trajectory file paths to run")
    t0 = time.perf_counter()
    windows = [w for p in paths for w in extract_scenarios(parse_trajectory_file(p))]
    data = LabeledData.from_samples(build_dataset(windows))
    scores = accuracy_table(data, regression_algorithms=())
    elapsed = time.perf_counter() - t0
    val = {s.algorithm: s.val for s in scores if s.task == "merge"}
    ranked = sorted(MERGE_ALGORITHMS, key=lambda a: -val[a])
    gap = {s.algorithm: s.train - s.val for s in scores if s.task == "merge"}
    measured(record_property, f"{len(data)} samples; ranking {ranked}; gaps rf {gap['random_forest']:.4f} "
                              f"dt {gap['decision_tree']:.4f}; {elapsed / 60:.1f} min")
    assert ranked[0] == "random_forest"
    assert set(ranked[-2:]) == {"naive_bayes", "perceptron"}
    assert gap["random_forest"] <= 0.015
    assert gap["decision_tree"] <= 0.01
    assert elapsed < 30 * 60


# -- 6 ------------------------------------------------------------------------


@pytest.mark.criterion(6, "sweep monotonicity: decision-tree training accuracy over depths 1..30")
def test_c6_depth_sweep(fixture_data, tmp_path, record_property):
    t0 = time.perf_counter()
    tags = dataset_splits(fixture_data, 42)
    y = fixture_data.recommendation
    train = (fixture_data.X[tags == "train"], y[tags == "train"])
    val = (fixture_data.X[tags == "val"], y[tags == "val"])
    res = sweep_max_depth(lambda d: DecisionTree("classify", d, seed=42), train, val, range(1, 31), 0.01)
    out = tmp_path / "sweep.csv"
    res.to_csv(out)
    elapsed = time.perf_counter() - t0
    rows = list(csv.reader(open(out)))
    drops = sum(b < a for a, b in zip(res.train_acc, res.train_acc[1:]))
    measured(record_property, f"train acc {res.train_acc[0]:.4f} -> {res.train_acc[-1]:.4f}, {drops} decreases, "
                              f"{len(rows) - 1} csv rows, chosen depth {res.chosen}, {elapsed:.1f} s")
    assert drops == 0
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 31))
    assert elapsed < 300


# -- 7 ------------------------------------------------------------------------


@pytest.mark.criterion(7, "regression tolerance metric and boosting loss monotonicity")
@pytest.mark.parametrize("pred,label,hand_count", [
    # within 1: positions 0, 1, 2, 5, 6, 9
    ([0.0, 0.5, 1.0, 1.5, 2.0, -0.5, -1.0, -1.5, 3.0, 0.2], [0.0] * 10, 6),
    # within 1: positions 0, 2, 5, 6, 8, 9
    ([2.4, 3.0, -1.0, 0.0, 5.5, 7.0, -3.0, 1.1, 0.9, 4.0], [3.0, 1.0, -1.5, 2.0, 4.0, 6.5, -2.1, 0.0, 0.0, 4.0], 6),
    # within 1: positions 4, 7, 8, 9 (the last two sit exactly on the tolerance)
    ([10.0, -10.0, 0.0, 0.0, 0.0, 1.01, -1.01, 0.99, 2.0, -2.0], [0.0, 0.0, 5.0, -5.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0], 4),
])
def test_c7_tolerance_hand_counts(pred, label, hand_count):
    assert tolerance_accuracy(pred, label, 1.0) * 10 == pytest.approx(hand_count)


@pytest.mark.criterion(7, "regression tolerance metric and boosting loss monotonicity")
@pytest.mark.parametrize("task", ["accel", "heading", "merge"])
def test_c7_boosting_loss_monotone(fixture_data, task, record_property):
    hp = tuned_hyperparameters(task, "gradient_boosting", 42)
    kind = "classify" if task == "merge" else "regress"
    gb = GradientBoosting(kind, hp.n_estimators, hp.max_depth, hp.learning_rate, seed=42)
    gb.fit(fixture_data.X, fixture_data.target(task))
    loss = np.array(gb.train_loss_)
    measured(record_property, f"{task}: {len(loss) - 1} stages, loss {loss[0]:.4g} -> {loss[-1]:.4g}, "
                              f"max step {np.diff(loss).max():.2e}")
    assert np.all(np.diff(loss) <= 1e-12)


# -- 8 ------------------------------------------------------------------------


def _rand_str(r):
    return "".join(r.choice("abcdefXYZ0129-_é漢 ") for _ in range(r.randint(1, 10)))


def _rand_entity(kind, r):
    ts = r.randint(1, 2 ** 50)
    if kind == "rud":
        return RoadUserDescription(_rand_str(r), ts, r.uniform(-1e4, 1e4), r.uniform(-1e4, 1e4), r.uniform(0, 70),
                                   r.uniform(-9, 9), r.uniform(0, 359.999), r.randint(-3, 9), r.uniform(1, 25),
                                   r.uniform(1, 3), r.random() < 0.5, r.choice(["vehicle", "perception"]))
    if kind == "subscribe":
        region = None
        if r.random() < 0.5:
            x0, y0 = r.uniform(-100, 100), r.uniform(-1e3, 1e3)
            region = Region(x0, x0 + r.uniform(0, 50), y0, y0 + r.uniform(0, 500))
        return Subscription(_rand_str(r), r.randint(0, 8), r.uniform(-20, 20), region)
    if kind == "recommendation":
        wps = tuple(Waypoint(ts + 100 * k, r.uniform(-50, 50), r.uniform(-1e3, 1e3), r.uniform(0, 60),
                             r.uniform(-9, 9), r.uniform(0, 359.999)) for k in range(r.randint(0, 30)))
        return TrajectoryRecommendation(_rand_str(r), _rand_str(r), wps, r.random() < 0.5, ts,
                                        r.choice([None, r.randint(0, 29)]))
    if kind == "feedback":
        return ManeuverFeedback(_rand_str(r), _rand_str(r), r.choice(["accept", "reject", "abort"]))
    return ErrorMessage(_rand_str(r), _rand_str(r), r.choice([None, _rand_str(r)]))


KINDS = ("rud", "subscribe", "recommendation", "feedback", "error")


@pytest.mark.criterion(8, "protocol round trip and fuzzing")
@pytest.mark.parametrize("kind", KINDS)
def test_c8_round_trip(kind, record_property):
    r = random.Random(KINDS.index(kind))
    bad = 0
    for _ in range(1000):
        e = _rand_entity(kind, r)
        if decode_message(encode_message(e)) != e:
            bad += 1
    measured(record_property, f"{kind}: 1000 round trips, {bad} mismatches")
    assert bad == 0


_JUNK = [None, True, -1, 0, 1e308, "", "x" * 50, [], {}, [1, 2], {"a": 1}, -1e-300, 2 ** 70, "NaN"]


def _mutate(frame: bytes, r: random.Random) -> bytes:
    op = r.randrange(8)
    b = bytearray(frame.rstrip(b"\n"))
    if op == 0 and b:      # flip bytes
        for _ in range(r.randint(1, 4)):
            b[r.randrange(len(b))] = r.randrange(256)
    elif op == 1:          # truncate
        b = b[: r.randrange(len(b) + 1)]
    elif op == 2 and b:    # delete a slice
        i = r.randrange(len(b))
        del b[i: i + r.randint(1, 20)]
    elif op == 3:          # insert junk
        i = r.randrange(len(b) + 1)
        b[i:i] = bytes(r.randrange(256) for _ in range(r.randint(1, 12)))
    elif op == 4 and b:    # duplicate a slice
        i = r.randrange(len(b))
        b[i:i] = b[i: i + r.randint(1, 40)]
    else:                  # structural: retype, drop or add fields
        obj = json.loads(bytes(b))
        target = obj if op == 5 or not isinstance(obj.get("payload"), dict) else obj["payload"]
        keys = list(target)
        if op == 5:
            target[r.choice(keys)] = r.choice(_JUNK)
        elif op == 6 and keys:
            del target[r.choice(keys)]
        else:
            target[_rand_str(r)] = r.choice(_JUNK)
            if keys:
                target[r.choice(keys)] = r.choice(_JUNK)
        b = bytearray(json.dumps(obj).encode())
    return bytes(b).replace(b"\n", b" ") + b"\n"


def _mutated_frames(n, seed):
    r = random.Random(seed)
    return [_mutate(encode_message(_rand_entity(r.choice(KINDS), r)), r) for _ in range(n)]


@pytest.mark.criterion(8, "protocol round trip and fuzzing")
def test_c8_fuzz_in_process(bundle, record_property):
    frames = _mutated_frames(10_000, 8)
    orch = Orchestrator(bundle)
    rejected = accepted = aborts = 0
    for f in frames:
        try:
            orch.handle(decode_message(f), "fuzz")
            accepted += 1
        except ProtocolError:
            rejected += 1
        except Exception:  # noqa: BLE001 - anything else is an abort
            aborts += 1
    measured(record_property, f"in process: 10000 mutated frames, {rejected} rejected, {accepted} accepted, "
                              f"{aborts} aborts")
    assert aborts == 0


@pytest.mark.criterion(8, "protocol round trip and fuzzing")
def test_c8_fuzz_live_server(bundle, record_property):
    frames = _mutated_frames(10_000, 88)
    probe_rud = RoadUserDescription("probe-M", 2 ** 53 - 10_000, 5.55, 100.0, 25.0, 0.0, 90.0, 2, 4.5, 1.8)
    with OrchestratorServer(Orchestrator(bundle)) as srv:
        sock = socket.create_connection(("127.0.0.1", srv.port), timeout=30)
        replies = []
        got_probe = threading.Event()

        def reader():
            try:
                with sock.makefile("rb") as fh:
                    for line in fh:
                        msg = decode_message(line)
                        replies.append(msg)
                        if isinstance(msg, TrajectoryRecommendation) and msg.user_id == "probe-M":
                            got_probe.set()
                            return
            except (OSError, ProtocolError):
                pass

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        for i in range(0, len(frames), 500):
            sock.sendall(b"".join(frames[i:i + 500]))
        sock.sendall(encode_message(Subscription("probe-M", 1, 1.85)) + encode_message(probe_rud))
        alive = got_probe.wait(60)
        sock.close()
        errors = [m for m in replies if isinstance(m, ErrorMessage)]
        internal = [m for m in errors if m.code == "internal"]
        measured(record_property, f"live server: {srv.frames} frames handled, {len(errors)} error replies, "
                                  f"{len(internal)} internal errors, session alive {alive}")
        assert alive
        assert not internal
        # fully truncated frames arrive as blank lines, which the server skips
        assert srv.frames == sum(1 for f in frames if f.strip()) + 2


# -- 9 ------------------------------------------------------------------------


def _kb_workload(n=10_000, ids=64, seed=9):
    r = random.Random(seed)
    stamps = r.sample(range(1, 10 * n), n)
    msgs = [RoadUserDescription(f"V{r.randrange(ids)}", ts, 0.0, float(i), 10.0, 0.0, 90.0, 1, 4.5, 1.8)
            for i, ts in enumerate(stamps)]
    expected = {}
    for m in msgs:
        if m.user_id not in expected or m.timestamp > expected[m.user_id].timestamp:
            expected[m.user_id] = m
    sessions = [msgs[k::4] for k in range(4)]
    return sessions, expected


def _check_kb(kb, expected):
    snap = {r.user_id: r for r in kb.snapshot()}
    lost = sum(1 for uid, m in expected.items() if snap.get(uid) != m)
    return len(snap), lost


@pytest.mark.criterion(9, "knowledge base: concurrent last-write-wins, zero lost updates")
def test_c9_threads(record_property):
    sessions, expected = _kb_workload()
    kb = KnowledgeBase(horizon_ms=10 ** 9)
    barrier = threading.Barrier(4)

    def run(msgs):
        barrier.wait()
        for m in msgs:
            kb.upsert(m)

    threads = [threading.Thread(target=run, args=(s,)) for s in sessions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    n, lost = _check_kb(kb, expected)
    measured(record_property, f"threads: 4 x {len(sessions[0])} upserts, {n} ids stored "
                              f"(expected {len(expected)}), {lost} lost")
    assert n == len(expected) and lost == 0


@pytest.mark.criterion(9, "knowledge base: concurrent last-write-wins, zero lost updates")
def test_c9_tcp_sessions(record_property):
    sessions, expected = _kb_workload(seed=99)
    kb = KnowledgeBase(horizon_ms=10 ** 9)
    with OrchestratorServer(Orchestrator(None, kb=kb)) as srv:
        def run(msgs):
            with socket.create_connection(("127.0.0.1", srv.port), timeout=30) as s:
                for i in range(0, len(msgs), 50):
                    s.sendall(b"".join(encode_message(m) for m in msgs[i:i + 50]))

        threads = [threading.Thread(target=run, args=(s,)) for s in sessions]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        deadline = time.monotonic() + 30
        while srv.frames < 10_000 and time.monotonic() < deadline:
            time.sleep(0.01)
        n, lost = _check_kb(kb, expected)
        measured(record_property, f"tcp: 4 sessions, {srv.frames} frames, {n} ids stored, {lost} lost")
        assert srv.frames == 10_000
        assert n == len(expected) and lost == 0


# -- 10 -----------------------------------------------------------------------


@pytest.mark.criterion(10, "latency budget on the bundled scenario, zero oracle violations")
def test_c10_latency_and_safety(bundle, record_property, tmp_path):
    trace = read_trace(BUNDLED_SCENARIO)
    with OrchestratorServer(Orchestrator(bundle)) as srv:
        res = replay(trace, ("127.0.0.1", srv.port), speed_factor=1.0)
    rep = res.report
    rep.to_csv(tmp_path / "latency.csv")
    violations = oracle_check(trace, res.recommendations)
    merges = sum(r.merge_flag for r in res.recommendations)
    measured(record_property, f"p50 {rep.p50:.2f} p95 {rep.p95:.2f} p99 {rep.p99:.2f} max {rep.max:.2f} ms "
                              f"(budget {rep.budget_ms:.0f}); {rep.received}/{rep.expected} recommendations, "
                              f"{merges} merge, {len(violations)} violations")
    measured(record_property, f"uplink {rep.uplink_kbps:.1f} kbps, downlink {rep.downlink_kbps:.1f} kbps; "
                              f"{rep.note}")
    assert rep.complete and rep.received == rep.expected == 70
    assert rep.p99 <= 30.0
    assert rep.passed
    assert "excluded" in rep.note
    assert violations == []
