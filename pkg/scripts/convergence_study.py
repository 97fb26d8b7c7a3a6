"""Loss and risk along growing width and growing sample size.

    python3 scripts/convergence_study.py --out results/convergence
"""
import argparse
import json
from pathlib import Path

import numpy as np

from wasscert import MlpSpec, SamplingDistribution, Seed, TargetFunction, TrainSettings
from wasscert.experiments import converge_n, converge_width, write_results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", type=int, nargs="+", default=[4, 16, 64])
    ap.add_argument("--Ns", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--N-floor", type=int, default=8192)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    dist = SamplingDistribution("uniform-cube", 1)
    settings = TrainSettings()
    width = converge_width(args.widths, TargetFunction("abs-offset"), dist, 32, 2, args.reps, settings,
                           Seed(args.seed))
    write_results(Path(args.out) / "width", vars(args), width.cells, width.to_dict())
    square = converge_width([8, 16, 32], TargetFunction("abs-offset"), dist, None, 2, args.reps, settings,
                            Seed(args.seed), schedule="square")
    write_results(Path(args.out) / "width-square", vars(args), square.cells, square.to_dict())
    sample = converge_n(MlpSpec((1, 8, 1)), TargetFunction("sinusoid", amplitude=1 / (2 * np.pi)), dist, args.Ns,
                        args.reps, settings, Seed(args.seed), 2, N_floor=args.N_floor)
    write_results(Path(args.out) / "sample", vars(args), sample.cells, sample.to_dict())
    print(json.dumps({"width_means": width.means,
                      "square_decreasing_fraction": square.summary["risk_strictly_decreasing_fraction"],
                      "sample_means": sample.means, "floor": sample.floor}))


if __name__ == "__main__":
    main()
