"""Write the bundled NGSIM-format test fixture: 50 complete lane changes plus
three that are cut off by the recording boundary."""

import argparse
from pathlib import Path

from lanemerge.synthetic import generate_highway
from lanemerge.trajectory import write_trajectory_file

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default=str(ROOT / "tests" / "data" / "ngsim_fixture.txt"))
    ap.add_argument("--events", type=int, default=50)
    ap.add_argument("--incomplete", type=int, default=3)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    tracks = generate_highway(args.events, seed=args.seed, n_incomplete=args.incomplete)
    write_trajectory_file(tracks.values(), args.output)
    print(f"{args.output}: {len(tracks)} vehicles, {args.events} complete lane changes")


if __name__ == "__main__":
    main()
