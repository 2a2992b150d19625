"""Accuracy table for the nine merge classifiers and the three regressors.

With ``--ngsim FILE ...`` the raw trajectory files are extracted and labeled
first; otherwise a synthetic highway of ``--samples`` samples is used.
"""

import argparse
import logging
import time
from pathlib import Path

from lanemerge.labeler import LabeledData, build_dataset
from lanemerge.ml.training import accuracy_table, write_scores, write_table
from lanemerge.synthetic import generate_highway
from lanemerge.trajectory import extract_scenarios, parse_trajectory_file


def load(args) -> LabeledData:
    windows = []
    if args.ngsim:
        for p in args.ngsim:
            windows += extract_scenarios(parse_trajectory_file(p))
    else:
        windows = extract_scenarios(generate_highway(-(-args.samples // 70), seed=args.seed))
    return LabeledData.from_samples(build_dataset(windows))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ngsim", nargs="*")
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--output", default="results/accuracy_table.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = load(args)
    print(f"{len(data)} samples, {data.recommendation.mean():.3f} true")
    scores = accuracy_table(data, args.seed)
    write_table(scores, out)
    write_scores(scores, out.with_name(out.stem + "_scores.csv"))
    for s in scores:
        gap = 100 * (s.train - s.val)
        print(f"{s.task:8s} {s.algorithm:20s} val {100 * s.val:6.2f}  gap {gap:5.2f}")
    print(f"wrote {out} in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
