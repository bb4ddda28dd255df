"""Command-line front end: fit, simulate, diag.

Exit codes: 0 success, 2 bad flags or unknown family, 3 data errors,
4 non-convergence (the report is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .dataio import (
    FAMILY_SCHEMA,
    load_dataset,
    read_report,  # noqa: F401  (re-exported convenience for scripting)
    report_dict,
    write_report,
    write_study_csv,
)
from .ela import CrnDraws, ela_marginal, elbo_estimate
from .errors import DataError, ElamlError
from .fitting import FitOptions, delta_transform, fit_ml, fit_reml, lrt, matern_extension
from .laplace import la_marginal
from .models import FAMILIES, build_model
from .params import ParamVec
from .study import StudyConfig, run_study

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NO_CONVERGENCE = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="elaml",
        description="Exact ML/REML for latent Gaussian models via Monte Carlo "
        "corrected Laplace approximation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to a CSV dataset")
    fit.add_argument("--model", required=True, help="model family name")
    fit.add_argument("--data", required=True, help="CSV data file")
    fit.add_argument("--method", choices=("la", "ela"), default="ela")
    fit.add_argument("--estimand", choices=("ml", "reml"), default="reml")
    fit.add_argument("--B", type=int, default=50, help="draws for point estimation")
    fit.add_argument("--B-tau", type=int, default=None, help="draws for the dispersion block (REML)")
    fit.add_argument("--B-se", type=int, default=None, help="draws for standard errors")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default=None, help="JSON report path")
    fit.add_argument(
        "--null-constraint",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="also fit with this coordinate fixed and report a likelihood ratio test",
    )
    fit.add_argument("--transform", choices=("matern",), default=None)
    fit.add_argument("--tol", type=float, default=1e-6)
    fit.add_argument("--max-iter", type=int, default=500)

    sim = sub.add_parser("simulate", help="run a replicated simulation study")
    sim.add_argument("--study", required=True, help="study config JSON")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--workers", type=int, default=None)

    diag = sub.add_parser("diag", help="likelihood diagnostics at a parameter value")
    diag.add_argument("--model", required=True)
    diag.add_argument("--data", required=True)
    diag.add_argument("--theta", required=True, help="JSON dict name->value, or @file")
    diag.add_argument("--B", type=int, default=1000)
    diag.add_argument("--seed", type=int, default=0)

    return parser


def _check_family(name):
    if name not in FAMILIES:
        known = ", ".join(sorted(FAMILIES))
        print(f"error: unknown model family {name!r}; known families: {known}", file=sys.stderr)
        return False
    return True


def _load_for_family(family, path):
    return load_dataset(path, FAMILY_SCHEMA[family])


def _parse_constraints(pairs):
    fixed = {}
    for raw in pairs:
        if "=" not in raw:
            raise ValueError(f"bad --null-constraint {raw!r}; expected NAME=VALUE")
        name, value = raw.split("=", 1)
        fixed[name.strip()] = float(value)
    return fixed


def _print_fit(fit):
    print(
        f"family={fit.family} method={fit.method} estimand={fit.estimand} "
        f"converged={fit.converged} loglik={fit.loglik_at_opt:.6f}"
    )
    print(f"{'param':<12}{'estimate':>14}{'se':>12}")
    for j, name in enumerate(fit.names):
        se = "." if fit.se is None else f"{fit.se[j]:.4f}"
        print(f"{name:<12}{fit.values[j]:>14.4f}{se:>12}")
    for note in fit.warnings:
        print(f"warning: {note}")


def _replay_line(args, resolved):
    parts = ["replay: elaml", args.command]
    for key, value in resolved:
        parts.append(f"--{key} {value}")
    print(" ".join(parts))


def cmd_fit(args):
    if not _check_family(args.model):
        return EXIT_USAGE
    dataset = _load_for_family(args.model, args.data)
    model = build_model(args.model, dataset)
    opts = FitOptions(
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        B_se=args.B_se,
        B_tau=args.B_tau,
    )
    fitter = fit_reml if args.estimand == "reml" else fit_ml
    fit = fitter(model, B=args.B, opts=opts, method=args.method)

    report = {"primary": None}
    shown = fit
    if args.transform == "matern":
        shown = delta_transform(fit, matern_extension(fit.names))
    report["primary"] = report_dict(shown)

    constraints = _parse_constraints(args.null_constraint)
    if constraints:
        null_opts = FitOptions(
            tol=args.tol,
            max_iter=args.max_iter,
            seed=args.seed,
            B_se=args.B_se,
            B_tau=args.B_tau,
            fixed=constraints,
        )
        null_fit = fitter(model, B=args.B, opts=null_opts, method=args.method)
        statistic, df = lrt(fit, null_fit)
        print(f"likelihood ratio test: statistic={statistic:.4f} df={df}")
        report["null"] = report_dict(null_fit)
        report["lrt"] = {"statistic": statistic, "df": df}

    _print_fit(shown)
    if args.out:
        doc = report["primary"] if len(report) == 1 else report
        write_report(doc, args.out)
        print(f"report written to {args.out}")

    _replay_line(
        args,
        [
            ("model", args.model),
            ("data", args.data),
            ("method", args.method),
            ("estimand", args.estimand),
            ("B", args.B),
            ("B-tau", fit.B_tau if fit.B_tau is not None else args.B),
            ("B-se", fit.B_se),
            ("seed", args.seed),
        ]
        + ([("out", args.out)] if args.out else [])
        + [("null-constraint", c) for c in args.null_constraint]
        + ([("transform", args.transform)] if args.transform else []),
    )
    if not fit.converged:
        print("error: fit did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_simulate(args):
    with open(args.study) as fh:
        config = StudyConfig.from_dict(json.load(fh))
    workers = args.workers
    study = run_study(config, workers=workers)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "summary.csv")
    json_path = os.path.join(args.out, "study.json")
    write_study_csv(study, csv_path)
    write_report(study, json_path)
    for method in config.methods:
        tab = study.tables[method]
        print(f"method={method} replicates={len(tab.rep_ids)} failures={len(tab.failures)}")
        print(f"{'param':<12}{'truth':>10}{'est':>12}{'se':>10}{'sd':>10}")
        for j, name in enumerate(tab.names):
            print(
                f"{name:<12}{tab.truth[j]:>10.3f}{tab.est[j]:>12.4f}"
                f"{tab.se[j]:>10.4f}{tab.sd[j]:>10.4f}"
            )
    print(f"outputs written to {csv_path} and {json_path}")
    _replay_line(
        args,
        [("study", args.study), ("out", args.out)]
        + ([("workers", workers)] if workers is not None else []),
    )
    return EXIT_OK


def cmd_diag(args):
    if not _check_family(args.model):
        return EXIT_USAGE
    dataset = _load_for_family(args.model, args.data)
    model = build_model(args.model, dataset)
    raw = args.theta
    if raw.startswith("@"):
        with open(raw[1:]) as fh:
            spec = json.load(fh)
    else:
        spec = json.loads(raw)
    names = model.layout.names
    missing = [n for n in names if n not in spec]
    if missing:
        raise DataError(f"--theta is missing coordinates {missing}")
    theta = ParamVec.from_natural_vector(
        model.layout, np.array([float(spec[n]) for n in names])
    )
    crn = CrnDraws.from_seed(args.seed, args.B, model.d)
    la = la_marginal(model, theta)
    est = ela_marginal(model, theta, args.B, crn)
    elbo = elbo_estimate(model, theta, args.B, crn)
    print(f"laplace        {la:.8f}")
    print(f"mc-corrected   {est.loglik:.8f}  (B={args.B}, mc_se={est.mc_se:.2e})")
    print(f"elbo           {elbo:.8f}  (gap {est.loglik - elbo:.3e})")
    print(f"ess            {est.ess:.1f} of {args.B}")
    if est.weights_degenerate:
        print("warning: importance weights degenerate; increase B")
    _replay_line(
        args,
        [
            ("model", args.model),
            ("data", args.data),
            ("theta", json.dumps(spec, sort_keys=True)),
            ("B", args.B),
            ("seed", args.seed),
        ],
    )
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "diag":
            return cmd_diag(args)
        parser.error(f"unknown command {args.command}")
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, ElamlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
