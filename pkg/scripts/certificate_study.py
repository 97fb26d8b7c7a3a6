"""Average certificate terms over independent trainings, exact and large-reference variants.

    python3 scripts/certificate_study.py --dim 2 --N 64 --reps 20
"""
import argparse
import json

import numpy as np

from wasscert import MlpSpec, SamplingDistribution, Seed, TargetFunction, TrainSettings
from wasscert.bounds import expected_certificate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--width", type=int, default=16)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--ref-factor", type=int, default=50, help="second run uses M_ref = factor * N")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    dist = SamplingDistribution("uniform-cube", args.dim)
    f = TargetFunction("sinusoid", amplitude=1 / (2 * np.pi))
    spec = MlpSpec.hidden(args.dim, [args.width])
    settings = TrainSettings(restarts=3, steps=args.steps)
    for M_ref in (args.N, args.ref_factor * args.N):
        s = expected_certificate(spec, f, dist, args.N, 2, settings, args.reps, Seed(args.seed), M_ref=M_ref)
        exact = all(c.exact for c in s.certificates)
        print(json.dumps({"M_ref": M_ref, "exact": exact, **s.to_dict()}, sort_keys=True))


if __name__ == "__main__":
    main()
