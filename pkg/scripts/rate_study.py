"""Measured decay of E W_p(mu_N, mu'_N) for uniform cubes of several dimensions.

    python3 scripts/rate_study.py --dims 1 2 3 --reps 100 --out results/rate-study
"""
import argparse
import json
from pathlib import Path

from wasscert import SamplingDistribution, Seed
from wasscert.experiments import rate_fit, write_results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--p", type=float, default=1.0)
    ap.add_argument("--Ns", type=int, nargs="+", default=[64, 128, 256, 512, 1024])
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="results/rate-study")
    args = ap.parse_args()

    print(f"{'d':>3} {'slope':>8} {'se':>7} {'stated':>8} {'prefactor':>10}")
    for d in args.dims:
        res = rate_fit(SamplingDistribution("uniform-cube", d), args.p, args.Ns, args.reps, Seed(args.seed, d))
        write_results(Path(args.out) / f"d{d}", {"dim": d, **vars(args)}, res.cells, res.to_dict())
        print(f"{d:>3} {res.slope:>8.3f} {res.slope_se:>7.3f} {res.stated_exponent:>8.3f} {res.prefactor:>10.4g}")
    print(json.dumps({"out": args.out}))


if __name__ == "__main__":
    main()
