"""``lanemerge`` command line: extract, label, train, evaluate, sweep, serve, replay, synth."""

from __future__ import annotations

import argparse
import asyncio
import configparser
import csv
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

log = logging.getLogger("lanemerge")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: list[Path] = field(default_factory=list)
    output: Path | None = None
    seed: int = 42
    clearance_factor: float = 0.1
    hyperparameters: dict = field(default_factory=dict)   # overrides only
    tolerance: float | None = None


def _read_ini(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not cp.read(path):
            raise UsageError(f"config file not found: {path}")
    return cp


def run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and command-line flags (flags win), and
    validate paths before any work starts."""
    cp = _read_ini(getattr(args, "config", None))
    cfg = RunConfig(args.command)
    if cp.has_section("safety"):
        cfg.clearance_factor = cp["safety"].getfloat("clearance_factor", cfg.clearance_factor)
    if cp.has_section("train"):
        sec = cp["train"]
        cfg.seed = sec.getint("seed", cfg.seed)
        for key, conv in (("max_depth", int), ("n_estimators", int), ("k_neighbors", int),
                          ("learning_rate", float)):
            if key in sec:
                cfg.hyperparameters[key] = conv(sec[key])
        if "tolerance" in sec:
            cfg.tolerance = sec.getfloat("tolerance")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "clearance_factor", None) is not None:
        cfg.clearance_factor = args.clearance_factor
    for flag, key in (("max_depth", "max_depth"), ("estimators", "n_estimators"), ("k", "k_neighbors")):
        if getattr(args, flag, None) is not None:
            cfg.hyperparameters[key] = getattr(args, flag)
    if getattr(args, "tolerance", None) is not None:
        cfg.tolerance = args.tolerance

    cfg.inputs = [Path(p) for p in (getattr(args, "input", None) or [])]
    for p in cfg.inputs:
        if not p.is_file():
            raise UsageError(f"input not found: {p}")
    out = getattr(args, "output", None)
    if out is not None:
        cfg.output = Path(out)
        if not cfg.output.parent.exists():
            raise UsageError(f"output directory does not exist: {cfg.output.parent}")
        if cfg.output.resolve() in {p.resolve() for p in cfg.inputs}:
            raise UsageError("output would overwrite an input")
    return cfg


def _atomic_write(path: Path, writer) -> None:
    """Write through a temporary file in the same directory so a failure leaves nothing behind."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _need(cfg: RunConfig, what: str, n: int | None = 1):
    if not cfg.inputs or (n is not None and len(cfg.inputs) != n):
        raise UsageError(f"{cfg.subcommand} needs {'one' if n == 1 else 'at least one'} --input ({what})")
    return cfg.inputs[0]


def _need_output(cfg: RunConfig) -> Path:
    if cfg.output is None:
        raise UsageError(f"{cfg.subcommand} needs --output")
    return cfg.output


def _load_data(path: Path):
    from .labeler import read_dataset
    data = read_dataset(path)
    if len(data) == 0:
        raise UsageError(f"{path}: dataset is empty")
    return data


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args, cfg: RunConfig) -> int:
    from .trajectory import ExtractionStats, extract_scenarios, parse_trajectory_file, write_windows
    _need(cfg, "raw trajectory file", n=None)
    windows, total = [], ExtractionStats()
    for p in cfg.inputs:
        st = ExtractionStats()
        ws = extract_scenarios(parse_trajectory_file(p), st)
        skipped = ", ".join(f"{k} {v}" for k, v in sorted(st.skipped.items())) or "none"
        print(f"{p}: {st.events} lane changes, {st.windows} windows, skipped: {skipped}")
        windows.extend(ws)
        total.events += st.events
        total.windows += st.windows
    print(f"total: {total.events} lane changes, {total.windows} windows")
    if args.dry_run:
        return 0
    out = _need_output(cfg)
    _atomic_write(out, lambda tmp: write_windows(windows, tmp))
    print(f"wrote {out}")
    return 0


def cmd_label(args, cfg: RunConfig) -> int:
    from .labeler import SafetyConfig, build_dataset, write_dataset
    from .trajectory import read_windows
    src = _need(cfg, "window file")
    out = _need_output(cfg)
    windows = list(read_windows(src))
    samples = build_dataset(windows, SafetyConfig(cfg.clearance_factor))
    if not samples:
        log.warning("%s holds no windows; writing an empty dataset", src)
    if not args.dry_run:
        _atomic_write(out, lambda tmp: write_dataset(samples, tmp))
    n_true = sum(s.recommendation for s in samples)
    n = len(samples)
    ratio = f"{n_true / n:.4f}" if n else "n/a"
    print(f"{len(windows)} windows, {n} samples: true {n_true}, false {n - n_true}, true ratio {ratio}")
    print(f"flagged acceleration labels: {sum(s.flagged for s in samples)}")
    return 0


def _hyperparameters(cfg: RunConfig, task: str, algorithm: str):
    from .ml.models import tuned_hyperparameters
    return replace(tuned_hyperparameters(task, algorithm, cfg.seed), **cfg.hyperparameters)


def cmd_train(args, cfg: RunConfig) -> int:
    from .ml.models import ALGORITHMS, save_bundle
    from .ml.training import accuracy_table, train_bundle, write_scores, write_table
    data = _load_data(_need(cfg, "labeled dataset"))
    out = _need_output(cfg)
    tol = {"accel": cfg.tolerance, "heading": None} if cfg.tolerance is not None else None
    if args.algorithm == "all":
        scores = accuracy_table(data, cfg.seed, tol)
        _atomic_write(out, lambda tmp: write_table(scores, tmp))
        long_form = out.with_name(out.stem + "_scores.csv")
        write_scores(scores, long_form)
        for s in scores:
            print(f"{s.task:8s} {s.algorithm:20s} train {s.train:.4f}  val {s.val:.4f}  test {s.test:.4f}")
        print(f"wrote {out} and {long_form}")
        return 0
    algorithm = args.algorithm or "random_forest"
    if algorithm not in ALGORITHMS or "merge" not in ALGORITHMS[algorithm][1]:
        raise UsageError(f"{algorithm!r} is not a merge classifier")
    overrides = {"merge": _hyperparameters(cfg, "merge", algorithm)}
    bundle, scores = train_bundle(data, cfg.seed, {"merge": algorithm}, overrides, tol)
    for s in scores:
        print(f"{s.task:8s} {s.algorithm:20s} train {s.train:.4f}  val {s.val:.4f}  test {s.test:.4f}")
    _atomic_write(out, lambda tmp: save_bundle(bundle, tmp))
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .ml.metrics import scorer
    from .ml.models import load_bundle
    if not args.model:
        raise UsageError("evaluate needs --model")
    if not Path(args.model).is_file():
        raise UsageError(f"model not found: {args.model}")
    data = _load_data(_need(cfg, "labeled dataset"))
    bundle = load_bundle(args.model)
    preds = bundle.predict_all(data.X)
    rows = []
    for task, p in zip(("merge", "accel", "heading"), preds):
        tol = cfg.tolerance if task == "accel" else None
        acc = scorer(task, tol)(p, data.target(task))
        rows.append((task, bundle.task(task).algorithm, acc))
        print(f"{task:8s} {bundle.task(task).algorithm:20s} accuracy {acc:.4f}")
    if cfg.output is not None:
        def write(tmp):
            with open(tmp, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["task", "algorithm", "accuracy", "n"])
                for task, alg, acc in rows:
                    w.writerow([task, alg, f"{acc:.6f}", len(data)])
        _atomic_write(cfg.output, write)
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .ml.metrics import scorer
    from .ml.models import make_model
    from .ml.selection import depth_gap, sweep_estimators, sweep_k, sweep_max_depth
    from .ml.training import dataset_splits
    data = _load_data(_need(cfg, "labeled dataset"))
    out = _need_output(cfg)
    task = args.task
    algorithm = args.algorithm or "random_forest"
    y = data.target(task)
    tags = dataset_splits(data, cfg.seed)
    train = (data.X[tags == "train"], y[tags == "train"])
    val = (data.X[tags == "val"], y[tags == "val"])
    score = scorer(task, cfg.tolerance if task == "accel" else None)
    base = _hyperparameters(cfg, task, algorithm)
    if algorithm == "knn":
        top = cfg.hyperparameters.get("k_neighbors", 100)
        res = sweep_k(make_model("knn", task, base), train, val, range(1, top + 1), score)
    elif args.param == "estimators":
        top = cfg.hyperparameters.get("n_estimators", 100)
        grid = range(10, top + 1, 10)
        res = sweep_estimators(lambda n: make_model(algorithm, task, replace(base, n_estimators=n)),
                               train, val, grid, score)
    else:
        top = cfg.hyperparameters.get("max_depth", 30)
        res = sweep_max_depth(lambda d: make_model(algorithm, task, replace(base, max_depth=d)),
                              train, val, range(1, top + 1), depth_gap(algorithm), score)
    _atomic_write(out, res.to_csv)
    for v, tr, va in zip(res.values, res.train_acc, res.val_acc):
        print(f"{res.param}={v:<4} train {tr:.4f}  val {va:.4f}")
    print(f"chosen {res.param}: {res.chosen}; wrote {out}")
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    from .labeler import SafetyConfig
    from .ml.models import load_bundle
    from .orchestrator.config import load_config, parse_listen
    from .orchestrator.knowledge import KnowledgeBase
    from .orchestrator.planner import PlannerSettings
    from .orchestrator.server import OrchestratorServer
    from .orchestrator.service import Orchestrator
    ocfg = load_config(args.config)
    if args.listen:
        host, port = parse_listen(args.listen)
        ocfg = replace(ocfg, host=host, port=port)
    if args.model:
        ocfg = replace(ocfg, model_path=args.model)
    if not ocfg.model_path:
        raise UsageError("serve needs a model (--model, config or LANEMERGE_MODEL)")
    try:
        bundle = load_bundle(ocfg.model_path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {ocfg.model_path}: {exc}") from None
    orch = Orchestrator(bundle, SafetyConfig(ocfg.clearance_factor), KnowledgeBase(ocfg.staleness_ms),
                        PlannerSettings(horizon_s=ocfg.horizon_s))
    server = OrchestratorServer(orch, ocfg.host, ocfg.port)
    print(f"serving on {ocfg.host}:{ocfg.port} (staleness {ocfg.staleness_ms} ms)", flush=True)
    asyncio.run(server.serve_forever())
    return 0


def cmd_replay(args, cfg: RunConfig) -> int:
    from .harness import BUNDLED_SCENARIO, oracle_check, read_trace, replay
    from .labeler import SafetyConfig
    from .orchestrator.config import parse_listen
    trace = read_trace(cfg.inputs[0] if cfg.inputs else BUNDLED_SCENARIO)
    endpoint = parse_listen(args.endpoint)
    res = replay(trace, endpoint, args.speed_factor)
    print(res.report.summary())
    if cfg.output is not None and res.report.durations_ms:
        res.report.to_csv(cfg.output)
    if not res.report.complete:
        return 1
    violations = oracle_check(trace, res.recommendations, SafetyConfig(cfg.clearance_factor))
    merges = sum(r.merge_flag for r in res.recommendations)
    print(f"oracle check: {merges} merge recommendations, {len(violations)} violations")
    for v in violations[:10]:
        print(f"  {v.recommendation_id} waypoint {v.waypoint_index} vs {v.other}: {v.reason}")
    return 0 if res.report.passed and not violations else 3


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _need_output(cfg)
    if args.kind == "scenario":
        from .harness import ScenarioParams, synth_scenario
        trace = synth_scenario(ScenarioParams(seed=cfg.seed))
        _atomic_write(out, trace.write)
        print(f"wrote {len(trace.ruds)} descriptions to {out}")
        return 0
    from .synthetic import generate_highway
    from .trajectory import write_trajectory_file
    tracks = generate_highway(args.events, seed=cfg.seed, n_incomplete=args.incomplete)
    _atomic_write(out, lambda tmp: write_trajectory_file(tracks.values(), tmp))
    print(f"wrote {len(tracks)} vehicles ({args.events} complete lane changes) to {out}")
    return 0


COMMANDS = {"extract": cmd_extract, "label": cmd_label, "train": cmd_train, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "serve": cmd_serve, "replay": cmd_replay, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanemerge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi=False):
        p.add_argument("--input", nargs="+" if multi else None, action=None if multi else "append")
        p.add_argument("--output")
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--dry-run", action="store_true")
        return p

    common(sub.add_parser("extract", help="raw trajectories -> lane-change windows"), multi=True)
    p = common(sub.add_parser("label", help="windows -> labeled dataset"))
    p.add_argument("--clearance-factor", type=float)
    for name, hlp in (("train", "dataset -> model bundle, or the accuracy table with --algorithm all"),
                      ("evaluate", "score a model bundle on a dataset"),
                      ("sweep", "train/validation accuracy over a hyperparameter range")):
        p = common(sub.add_parser(name, help=hlp))
        p.add_argument("--model")
        p.add_argument("--algorithm")
        p.add_argument("--max-depth", type=int)
        p.add_argument("--estimators", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--tolerance", type=float)
        if name == "sweep":
            p.add_argument("--task", choices=("merge", "accel", "heading"), default="merge")
            p.add_argument("--param", choices=("depth", "estimators"), default="depth")
    p = sub.add_parser("serve", help="run the orchestrator")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--listen")
    p = common(sub.add_parser("replay", help="stream a scenario trace to a running orchestrator"))
    p.add_argument("--endpoint", default="127.0.0.1:7400")
    p.add_argument("--speed-factor", type=float, default=1.0)
    p = common(sub.add_parser("synth", help="write a synthetic highway file or a replay scenario"))
    p.add_argument("--kind", choices=("highway", "scenario"), default="highway")
    p.add_argument("--events", type=int, default=50)
    p.add_argument("--incomplete", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = run_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"lanemerge {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"lanemerge {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
