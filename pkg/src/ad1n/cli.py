"""Command line interface.

Subcommands
-----------
classify     print the regime and eigenvalues of a parameter file as JSON
simulate     write a path as CSV (t, Y, X1..Xn) with a JSON sidecar
estimate     read a path CSV and print the estimate as JSON
moments      print stationary moments and the sandwich covariance as JSON
experiment   run a Monte Carlo experiment; exit code 0 iff all checks pass
gap          discrete vs exact-conditional estimator gap across horizons

All subcommands read the flat key = value config format documented in
:mod:`ad1n.harness`.  ``--seed`` overrides the config seed, ``--threads``
selects the worker count (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import Ad1nError
from .harness import (
    experiment_config_from_text,
    discrete_vs_continuous_gap,
    params_from_config,
    parse_config_text,
    run_experiment,
    write_report,
)
from .model import classify
from .moments import (
    TildeFrame,
    asymptotic_covariance,
    stationary_moment_table,
    stationary_x_moments,
)
from .simulate import read_path_csv, simulate_path, write_path_csv
from .estimate import estimate_path


def _read_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _print_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_classify(args) -> int:
    raw = _read_config(args.config)
    params = params_from_config(raw)
    cls = classify(params)
    _print_json(
        {
            "regime": cls.regime.value,
            "b": cls.b,
            "eig_theta": [float(v) for v in cls.eig_theta],
        }
    )
    return 0


def _cmd_simulate(args) -> int:
    raw = _read_config(args.config)
    params = params_from_config(raw)
    horizon = float(raw.get("horizon", raw.get("horizons", "1").split(",")[0]))
    delta = float(raw["delta"])
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    path = simulate_path(params, horizon, delta, seed)
    os.makedirs(args.out, exist_ok=True)
    csv_file = os.path.join(args.out, "path.csv")
    sidecar = {"horizon": horizon, "params": {k: raw[k] for k in raw if k in
               ("n", "a", "b", "m", "kappa", "theta", "rho", "y0", "x0")}}
    write_path_csv(path, csv_file, sidecar)
    print(csv_file)
    return 0


def _cmd_estimate(args) -> int:
    path = read_path_csv(args.path)
    est = estimate_path(path, args.flavor)
    _print_json(
        {
            "flavor": est.flavor,
            "tau_hat": [float(v) for v in est.tau_hat],
            "a": est.a,
            "b": est.b,
            "m": [float(v) for v in est.m],
            "kappa": [float(v) for v in est.kappa],
            "theta": [[float(v) for v in row] for row in est.theta],
            "cond1": est.cond1,
            "cond2": est.cond2,
            "horizon": est.horizon,
            "step": est.step,
        }
    )
    return 0


def _cmd_moments(args) -> int:
    raw = _read_config(args.config)
    params = params_from_config(raw)
    frame = TildeFrame.from_params(params)
    table = stationary_moment_table(params, max_order=3)
    ey, ey2, ey3, ex, eyx, ey2x, exx, eyxx = stationary_x_moments(params)
    report = asymptotic_covariance(params)
    _print_json(
        {
            "stationary": {
                "E[Y]": ey,
                "E[Y^2]": ey2,
                "E[Y^3]": ey3,
                "E[X]": [float(v) for v in ex],
                "E[YX]": [float(v) for v in eyx],
                "E[Y^2 X]": [float(v) for v in ey2x],
                "E[XX^T]": [[float(v) for v in row] for row in exx],
                "E[YXX^T]": [[float(v) for v in row] for row in eyxx],
            },
            "tilde_eigenvalues": [float(v) for v in frame.lam],
            "covariance": {
                "EG": [[float(v) for v in row] for row in report.EG],
                "EH": [[float(v) for v in row] for row in report.EH],
                "sandwich": [[float(v) for v in row] for row in report.sandwich],
                "cond_EG": report.cond_EG,
            },
        }
    )
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = experiment_config_from_text(fh.read())
    if args.seed is not None:
        config.seed = args.seed
    report = run_experiment(config, threads=args.threads)
    write_report(report, args.out, stem="experiment")
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"{'PASS' if report.passed else 'FAIL'}  overall")
    return 0 if report.passed else 1


def _cmd_gap(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = experiment_config_from_text(fh.read())
    if args.seed is not None:
        config.seed = args.seed
    report = discrete_vs_continuous_gap(config, threads=args.threads)
    write_report(report, args.out, stem="gap")
    for T, med in zip(report.horizons, report.medians):
        print(f"T={T:g}  median_gap={med:.6g}")
    print(f"decreasing: {report.decreasing}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ad1n", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="parameter/config file")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--out", default="ad1n_out", help="output directory")
        sp.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto, 1 = sequential)")

    sp = sub.add_parser("classify", help="print regime classification")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=_cmd_classify)

    sp = sub.add_parser("simulate", help="simulate a path to CSV")
    add_common(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate tau from a path CSV")
    sp.add_argument("--path", required=True, help="path CSV file")
    sp.add_argument("--flavor", default="discrete",
                    choices=["continuous", "discrete", "exact"])
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("moments", help="print moments and covariance report")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=_cmd_moments)

    sp = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    add_common(sp)
    sp.set_defaults(func=_cmd_experiment)

    sp = sub.add_parser("gap", help="discrete vs exact-conditional gap study")
    add_common(sp)
    sp.set_defaults(func=_cmd_gap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Ad1nError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
