"""Command-line entry point: ``rmrom <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .mesh_fem import AssemblyError, run_simulation
from .physics import SimulationConfig
from .qoi import FitDegenerateError, check_diagnostics, compute_qois, write_qoi_csv
from .qp import QPError
from .rom import SMOConvergenceError
from .rom.io import atomic_write_text

NUMERICAL_ERRORS = (QPError, AssemblyError, SMOConvergenceError, FitDegenerateError,
                    FloatingPointError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read JSON from {path}: {exc}") from None


def cmd_simulate(args):
    cfg = SimulationConfig.from_dict(_read_json(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_simulation(cfg)
    series = compute_qois(res, sim_id=args.sim_id)
    write_qoi_csv(out / f"{args.sim_id}.qoi.csv", series)
    if args.snapshots:
        res.write_snapshots(out / f"{args.sim_id}.snapshots.csv", args.sim_id)
    diag = check_diagnostics(res)
    print(json.dumps({"sim_id": args.sim_id, "mass_drift": diag.mass_drift,
                      "m_norm_monotone": diag.m_norm_monotone, "envelope_ok": diag.envelope_ok}))


def cmd_sweep(args):
    spec = pl.SweepSpec.from_dict(_read_json(args.spec)) if args.spec else pl.SweepSpec.desk()
    spec.seed = args.seed
    rows = pl.run_sweep(spec, args.out, workers=args.workers)
    ok = sum(r[2] == "ok" for r in rows)
    print(f"{ok}/{len(rows)} simulations succeeded; manifest at {Path(args.out) / 'manifest.csv'}")


def cmd_dataset(args):
    fm = pl.build_dataset(args.dataset, args.target, args.species)
    out = args.out or str(Path(args.dataset) / f"features_{args.target}_{args.species}.csv")
    atomic_write_text(out, fm.to_csv())
    print(f"{fm.X.shape[0]} rows x {fm.X.shape[1]} features -> {out}")


def cmd_train(args):
    d = _read_json(args.protocol)
    dataset = d.pop("dataset", None) or args.dataset
    out = d.pop("out", None) or args.out
    if dataset is None or out is None:
        raise UsageError("train needs a dataset directory and an output directory")
    proto = pl.ExperimentProtocol.from_dict(d)
    fm = pl.build_dataset(dataset, proto.target, proto.species)
    rep = pl.train_protocol(fm, proto, out_dir=out, workers=args.workers)
    print(json.dumps(pl._jsonable(rep.summary), sort_keys=True))


def cmd_predict(args):
    paths = sorted(glob.glob(args.models))
    if not paths:
        raise UsageError(f"no model files match {args.models}")
    point = _read_json(args.point)
    times = np.linspace(args.t0, args.t1, args.steps)
    mean, lo, hi, per_1000 = pl.predict_point(paths, point, times, clip=args.clip)
    text = pl.prediction_csv(times, mean, lo, hi)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"{len(paths)} models, {per_1000 * 1e3:.3f} ms per 1000 predictions per ensemble",
          file=sys.stderr)


def cmd_features(args):
    fm = pl.build_dataset(args.dataset, args.target, args.species)
    reports = pl.importance_reports(fm, methods=[args.method], seed=args.seed, n_trees=args.trees)
    rep = reports[args.method]
    if args.out:
        atomic_write_text(args.out, rep.to_csv() if args.out.endswith(".csv") else rep.to_json())
    print(rep.to_csv(), end="")


def cmd_cluster(args):
    k = args.k if args.k == "auto" else int(args.k)
    rows, chosen = pl.exponent_table(args.dataset, target=args.target, k=k, seed=args.seed)
    cols = ["sim_id", *pl.PARAMS, "species", "exponent", "fit_r2", "cluster"]
    text = pl._rows_csv(rows, cols)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"clusters per species: {chosen}", file=sys.stderr)


def cmd_report(args):
    analyses = args.analyses.split(",")
    written = pl.report(args.dataset, args.out, seed=args.seed, k=args.k, analyses=analyses,
                        svg=args.svg)
    for name in written:
        print(Path(args.out) / name)


def build_parser():
    p = _Parser(prog="rmrom", description="Reactive-mixing simulation and reduced-order models")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one simulation from a config JSON")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sim-id", default="sim")
    s.add_argument("--snapshots", action="store_true", help="also write field snapshots")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--spec", help="sweep spec JSON (default: the 72-run desk grid)")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("dataset", help="build the scaled feature matrix")
    s.add_argument("--in", dest="dataset", required=True)
    s.add_argument("--target", default="degree_of_mixing")
    s.add_argument("--species", choices=pl.SPECIES, default="A")
    s.add_argument("--out")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", help="train and evaluate a hyperparameter ensemble")
    s.add_argument("--protocol", required=True)
    s.add_argument("--in", dest="dataset")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="ensemble prediction at one parameter point")
    s.add_argument("--models", required=True, help="glob of model JSON files")
    s.add_argument("--point", required=True, help="JSON with v0, aniso_ratio, D_m, kappa_fL, period_T")
    s.add_argument("--t0", type=float, default=0.01)
    s.add_argument("--t1", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--clip", choices=["unit", "nonneg", "none"], default="unit")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("features", help="feature importance")
    s.add_argument("--in", dest="dataset", required=True)
    s.add_argument("--method", choices=["ftest", "mi", "rf"], required=True)
    s.add_argument("--target", default="degree_of_mixing")
    s.add_argument("--species", choices=pl.SPECIES, default="A")
    s.add_argument("--trees", type=int, choices=[5, 100, 250], default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("cluster", help="k-means on scaling exponents")
    s.add_argument("--in", dest="dataset", required=True)
    s.add_argument("--k", default="auto")
    s.add_argument("--target", default="degree_of_mixing")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("report", help="plot-ready CSV bundle")
    s.add_argument("--in", dest="dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--analyses", default="ensemble,exponents,importance")
    s.add_argument("--k", default="auto")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "k", "auto") != "auto":
        try:
            int(args.k)
        except ValueError:
            parser.error("--k must be 'auto' or an integer")
    if getattr(args, "clip", None) == "none":
        args.clip = None
    try:
        args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"rmrom: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, KeyError, OSError, pl.SweepError) as exc:
        print(f"rmrom: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
