"""Depth sweeps (1..30) for the tree learners on every target, as CSV for re-plotting."""

import argparse
from dataclasses import replace
from pathlib import Path

from lanemerge.labeler import LabeledData, build_dataset
from lanemerge.ml.metrics import scorer
from lanemerge.ml.models import make_model, tuned_hyperparameters
from lanemerge.ml.selection import depth_gap, sweep_max_depth
from lanemerge.ml.training import dataset_splits
from lanemerge.synthetic import generate_highway
from lanemerge.trajectory import extract_scenarios, parse_trajectory_file

RUNS = [("merge", "random_forest"), ("merge", "decision_tree"),
        ("accel", "gradient_boosting"), ("accel", "random_forest"),
        ("heading", "gradient_boosting"), ("heading", "random_forest")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ngsim", nargs="*")
    ap.add_argument("--samples", type=int, default=5_000)
    ap.add_argument("--depths", type=int, default=30)
    ap.add_argument("--estimators", type=int, default=30, help="ensemble size during the sweep")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--outdir", default="results/sweeps")
    args = ap.parse_args()

    if args.ngsim:
        windows = [w for p in args.ngsim for w in extract_scenarios(parse_trajectory_file(p))]
    else:
        windows = extract_scenarios(generate_highway(-(-args.samples // 70), seed=args.seed))
    data = LabeledData.from_samples(build_dataset(windows))
    tags = dataset_splits(data, args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for task, alg in RUNS:
        y = data.target(task)
        train = (data.X[tags == "train"], y[tags == "train"])
        val = (data.X[tags == "val"], y[tags == "val"])
        hp = replace(tuned_hyperparameters(task, alg, args.seed), n_estimators=args.estimators)
        res = sweep_max_depth(lambda d: make_model(alg, task, replace(hp, max_depth=d)), train, val,
                              range(1, args.depths + 1), depth_gap(alg), scorer(task))
        path = outdir / f"{task}_{alg}_depth.csv"
        res.to_csv(path)
        print(f"{task:8s} {alg:18s} chosen depth {res.chosen:3d} -> {path}")


if __name__ == "__main__":
    main()
