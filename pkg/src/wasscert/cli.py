"""Command-line front end.

    wasscert sample          --config C | --kind K --dim D --n N [--seed S]  --out points.csv
    wasscert wasserstein     --a A.csv --b B.csv [--p P] [--method M]
    wasscert train           --config C [--out DIR]
    wasscert certify         --config C [--model M --points X] [--csv FILE]
    wasscert rate-fit        --config C [--out DIR]
    wasscert converge-n      --config C [--out DIR]
    wasscert converge-width  --config C [--out DIR]
    wasscert local-study     --config C [--out DIR]

Each command prints one JSON line on stdout. Exit status: 0 success, 1
configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bounds, experiments, transport
from .config import ExperimentConfig, dump_config, load_config
from .errors import ConfigError, NumericalError
from .measures import EmpiricalMeasure, PointCloud, SamplingDistribution, Seed, sample_points
from .network import load_params
from .training import LossTrace, TrainedModel, train_on_sample

log = logging.getLogger("wasscert")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def read_points(path) -> PointCloud:
    try:
        pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read point file: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(path), f"malformed point file: {exc}") from None
    if pts.size == 0:
        raise ConfigError(str(path), "point file is empty")
    return PointCloud(pts)


def write_points(path, cloud: PointCloud) -> None:
    with open(path, "w") as fh:
        for row in cloud.points:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=float))


def _run_dir(cfg: ExperimentConfig, name: str, out: Optional[str]) -> Path:
    if out:
        return Path(out)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    return Path(cfg.out_dir) / name / stamp


def cmd_sample(args) -> dict:
    if args.config:
        cfg = load_config(args.config)
        cfg.require("N")
        dist, n, seed = cfg.distribution, cfg.N, cfg.seed
    else:
        if args.kind is None or args.dim is None or args.n is None:
            raise ConfigError("--kind/--dim/--n", "required without --config")
        dist = SamplingDistribution(args.kind, args.dim)
        n, seed = args.n, args.seed
    cloud = sample_points(dist, n, Seed(seed))
    write_points(args.out, cloud)
    return {"command": "sample", "n": n, "dim": dist.dim, "out": str(args.out)}


def cmd_wasserstein(args) -> dict:
    mu = EmpiricalMeasure(read_points(args.a))
    nu = EmpiricalMeasure(read_points(args.b))
    if args.p < 1:
        raise ConfigError("--p", "p >= 1")
    method = args.method
    if method == "auto":
        res = transport.wasserstein(mu, nu, args.p, epsilon=args.epsilon)
    elif method == "exact":
        res = transport.wasserstein_exact(mu, nu, args.p)
    elif method == "1d":
        res = transport.wasserstein_1d(mu, nu, args.p)
    elif method == "brute":
        res = transport.brute_force_wasserstein(mu, nu, args.p)
    else:
        res = transport.sinkhorn(mu, nu, args.p, epsilon=args.epsilon)
    return res.to_dict()


def cmd_train(args) -> dict:
    cfg = load_config(args.config)
    cfg.require("N")
    out = _run_dir(cfg, "train", args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.network.spec(cfg.distribution.dim)
    model = train_on_sample(spec, cfg.target, cfg.distribution, cfg.N, cfg.p, cfg.train, Seed(cfg.seed))
    dump_config(cfg, out / "config.json")
    model.save(out / "model.bin", out / "trace.csv")
    write_points(out / "train_points.csv", model.train_points)
    return {"command": "train", "final_loss": model.final_loss, "best_restart": model.trace.best_restart,
            "out": str(out)}


def cmd_certify(args) -> dict:
    cfg = load_config(args.config)
    out = _run_dir(cfg, "certify", args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = Seed(cfg.seed)
    certs = []
    if args.model:
        if not args.points:
            raise ConfigError("--points", "required with --model")
        params = load_params(args.model)
        cloud = read_points(args.points)
        loss = bounds.discrete_loss(params, cloud, cfg.target, cfg.p)
        model = TrainedModel(params.spec, params, LossTrace([], [loss], 0, loss), cloud, cfg.p, "external")
        certs.append(bounds.certify(model, cfg.target, cfg.distribution, cfg.M_ref, cfg.p, seed.spawn(2)))
    else:
        cfg.require("N")
        spec = cfg.network.spec(cfg.distribution.dim)
        for r in range(cfg.reps):
            s = seed.spawn(r)
            model = train_on_sample(spec, cfg.target, cfg.distribution, cfg.N, cfg.p, cfg.train, s)
            certs.append(bounds.certify(model, cfg.target, cfg.distribution, cfg.M_ref, cfg.p, s.spawn(2)))
    dump_config(cfg, out / "config.json")
    csv_path = Path(args.csv) if args.csv else out / "certificates.csv"
    bounds.append_csv(csv_path, certs)
    for c in certs:
        _emit(c.to_dict())
    return {"command": "certify", "certificates": len(certs), "all_hold": all(c.holds for c in certs),
            "csv": str(csv_path)}


def cmd_rate_fit(args) -> dict:
    cfg = load_config(args.config)
    cfg.require("Ns")
    res = experiments.rate_fit(cfg.distribution, cfg.p, cfg.Ns, cfg.reps, Seed(cfg.seed))
    out = experiments.write_results(_run_dir(cfg, "rate-fit", args.out), cfg.to_dict(), res.cells, res.to_dict())
    return {"command": "rate-fit", "slope": res.slope, "slope_se": res.slope_se,
            "stated_exponent": res.stated_exponent, "out": str(out)}


def cmd_converge_n(args) -> dict:
    cfg = load_config(args.config)
    cfg.require("Ns")
    spec = cfg.network.spec(cfg.distribution.dim)
    sweep = experiments.converge_n(spec, cfg.target, cfg.distribution, cfg.Ns, cfg.reps, cfg.train,
                                   Seed(cfg.seed), cfg.p, cfg.N_floor, cfg.floor_train, cfg.M_risk)
    out = experiments.write_results(_run_dir(cfg, "converge-n", args.out), cfg.to_dict(), sweep.cells,
                                    sweep.to_dict())
    return {"command": "converge-n", "means": sweep.means, "floor": sweep.floor, "out": str(out)}


def cmd_converge_width(args) -> dict:
    cfg = load_config(args.config)
    cfg.require("widths")
    sweep = experiments.converge_width(cfg.widths, cfg.target, cfg.distribution, cfg.N, cfg.p, cfg.reps,
                                       cfg.train, Seed(cfg.seed), cfg.schedule, cfg.network.activation,
                                       cfg.M_risk)
    out = experiments.write_results(_run_dir(cfg, "converge-width", args.out), cfg.to_dict(), sweep.cells,
                                    sweep.to_dict())
    return {"command": "converge-width", "means": sweep.means, "out": str(out)}


def cmd_local_study(args) -> dict:
    cfg = load_config(args.config)
    cfg.require("Ns")
    if cfg.train.mode != "single-run-local":
        cfg = replace(cfg, train=replace(cfg.train, mode="single-run-local"))
    spec = cfg.network.spec(cfg.distribution.dim)
    sweep = experiments.local_minimiser_study(spec, cfg.target, cfg.distribution, cfg.Ns, cfg.reps,
                                              Seed(cfg.seed), cfg.p, cfg.train, cfg.M_risk)
    out = experiments.write_results(_run_dir(cfg, "local-study", args.out), cfg.to_dict(), sweep.cells,
                                    sweep.to_dict())
    return {"command": "local-study", "means": sweep.means, "max_loss": sweep.summary["max_loss"],
            "out": str(out)}


COMMANDS = {
    "sample": cmd_sample, "wasserstein": cmd_wasserstein, "train": cmd_train, "certify": cmd_certify,
    "rate-fit": cmd_rate_fit, "converge-n": cmd_converge_n, "converge-width": cmd_converge_width,
    "local-study": cmd_local_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wasscert", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw a point cloud")
    p.add_argument("--config")
    p.add_argument("--kind")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("wasserstein", help="distance between two point files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--method", choices=("auto", "exact", "1d", "sinkhorn", "brute"), default="auto")
    p.add_argument("--epsilon", type=float)

    for name in ("train", "certify", "rate-fit", "converge-n", "converge-width", "local-study"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output directory (default: <out_dir>/<command>/<timestamp>)")
        if name == "certify":
            p.add_argument("--model")
            p.add_argument("--points")
            p.add_argument("--csv")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _emit(COMMANDS[args.command](args))
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any other driver error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
