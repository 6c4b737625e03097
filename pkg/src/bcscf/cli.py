"""Command-line interface.

Exit codes: 0 success, 2 bad arguments, 3 unparseable data or model file,
4 numerical failure, 5 I/O failure, 6 unknown user/item id.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import evaluation
from .dataset import normalize_format, parse_movielens
from .errors import (
    DataValidationError,
    ModelFormatError,
    NumericalError,
    ParseError,
    UnknownIdError,
)
from .modelio import load_model, save_model
from .solver import SolverConfig, fit_model

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_PARSE = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5
EXIT_UNKNOWN_ID = 6

# flag dest -> default; None entries are resolved per dataset format
DEFAULTS = {
    "format": None,
    "rank": 50,
    "lambda_u": None,
    "lambda_v": 1e-1,
    "delta": evaluation.DEFAULT_DELTA,
    "folds": 5,
    "seed": 0,
    "repeats": 1,
    "variant": "bcs",
    "max_iters": SolverConfig.max_outer_iters,
    "tol": SolverConfig.obj_tol,
    "inner_v_steps": 1,
    "init_scale": 1.0,
    "workers": 1,
}
LAMBDA_U_BY_FORMAT = {"tab_100k": 1e3, "colon_1m": 1e4}


def _add_data_args(p):
    p.add_argument("--dataset", required=True, help="ratings file (u.data or ratings.dat)")
    p.add_argument("--format", choices=["100k", "1m", "tab_100k", "colon_1m"],
                   help="file format (default: guessed from the file)")


def _add_solver_args(p):
    p.add_argument("--rank", type=int, help="latent dimension k (default 50)")
    p.add_argument("--lambda-u", type=float,
                   help="ridge weight on U (default 1e3 for 100k, 1e4 for 1m)")
    p.add_argument("--lambda-v", type=float, help="l1 (bcs) or ridge (dense) weight on V")
    p.add_argument("--delta", type=float, help="bias regularizer (default 1e-3)")
    p.add_argument("--variant", choices=["bcs", "dense"])
    p.add_argument("--max-iters", type=int, help="outer iteration cap")
    p.add_argument("--tol", type=float, help="relative objective-change stopping tolerance")
    p.add_argument("--inner-v-steps", type=int, help="ISTA steps per outer iteration")
    p.add_argument("--init-scale", type=float, help="scale of the uniform initial factors")
    p.add_argument("--seed", type=int, help="seed for factor init and fold assignment")
    p.add_argument("--config", help="JSON file of option defaults (flag names, '_' for '-')")


def _add_cv_args(p):
    p.add_argument("--folds", type=int, help="number of folds (default 5)")
    p.add_argument("--repeats", type=int, help="solver re-runs per fold with seeds seed+r")
    p.add_argument("--workers", type=int, help="folds run in parallel threads")
    p.add_argument("--no-clamp", action="store_true",
                   help="score raw predictions instead of clamping to [1, 5]")
    p.add_argument("--out", help="write the JSON report here")


def build_parser():
    parser = argparse.ArgumentParser(prog="bcscf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="summarize a ratings file")
    _add_data_args(p)

    p = sub.add_parser("train", help="fit on the whole file and save a model")
    _add_data_args(p)
    _add_solver_args(p)
    p.add_argument("--model", default="model.bcscf", help="output model file")
    p.add_argument("--out", help="write the fit report as JSON here")

    p = sub.add_parser("cross-validate", help="k-fold MAE experiment")
    _add_data_args(p)
    _add_solver_args(p)
    _add_cv_args(p)

    p = sub.add_parser("compare", help="bcs vs dense on identical folds")
    _add_data_args(p)
    _add_solver_args(p)
    _add_cv_args(p)

    p = sub.add_parser("predict", help="predict one rating from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--user", type=int, required=True, help="original user id")
    p.add_argument("--item", type=int, required=True, help="original item id")
    return parser


class UsageError(ValueError):
    pass


def resolve_options(args) -> dict:
    """Merge flags over the config file over built-in defaults."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_opts = json.load(fh)
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        unknown = set(file_opts) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {sorted(unknown)}")
        opts.update(file_opts)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    fmt = opts["format"] or _guess_format(args.dataset)
    opts["format"] = normalize_format(fmt)
    if opts["lambda_u"] is None:
        opts["lambda_u"] = LAMBDA_U_BY_FORMAT[opts["format"]]
    return opts


def _guess_format(path):
    try:
        with open(path, encoding="latin-1") as fh:
            first = fh.readline()
    except OSError:
        return "tab_100k"
    return "colon_1m" if "::" in first else "tab_100k"


def solver_config(opts) -> SolverConfig:
    return SolverConfig(rank=opts["rank"], lambda_u=opts["lambda_u"],
                        lambda_v=opts["lambda_v"], max_outer_iters=opts["max_iters"],
                        obj_tol=opts["tol"], inner_v_steps=opts["inner_v_steps"],
                        seed=opts["seed"], variant=opts["variant"],
                        init_scale=opts["init_scale"])


def cmd_inspect(args, out):
    ds = parse_movielens(args.dataset, normalize_format(args.format or _guess_format(args.dataset)))
    print(f"dataset:  {args.dataset}", file=out)
    print(f"users:    {ds.num_users}", file=out)
    print(f"items:    {ds.num_items}", file=out)
    print(f"ratings:  {len(ds)}", file=out)
    print(f"density:  {ds.density:.4f}", file=out)
    values, counts = np.unique(ds.ratings, return_counts=True)
    print("rating histogram:", file=out)
    for v, c in zip(values, counts):
        print(f"  {v:g}: {c}", file=out)
    return EXIT_OK


def cmd_train(args, out):
    opts = resolve_options(args)
    ds = parse_movielens(args.dataset, opts["format"])
    config = solver_config(opts)
    model, report = fit_model(ds.to_masked(), config, delta=opts["delta"],
                              user_ids=ds.user_ids(), item_ids=ds.item_ids())
    save_model(model, args.model)
    trace = report.objective_trace
    print(f"model written to {args.model}", file=out)
    print(f"variant:      {config.variant}", file=out)
    print(f"iterations:   {report.iterations_run}", file=out)
    print(f"converged:    {str(report.converged).lower()}", file=out)
    if trace:
        print(f"objective:    {trace[0]:.6g} -> {trace[-1]:.6g}", file=out)
    print(f"v_sparsity:   {report.v_sparsity:.4f}", file=out)
    print(f"wall_time:    {report.wall_time_seconds:.2f}s", file=out)
    if args.out:
        payload = {"config": config.to_dict(), "delta": opts["delta"], **report.to_dict()}
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cv_kwargs(opts, args):
    if opts["folds"] < 2:
        raise UsageError(f"--folds must be >= 2, got {opts['folds']}")
    return dict(delta=opts["delta"], repeats=opts["repeats"], clamp=not args.no_clamp,
                workers=opts["workers"])


def cmd_cross_validate(args, out):
    opts = resolve_options(args)
    kwargs = _cv_kwargs(opts, args)
    ds = parse_movielens(args.dataset, opts["format"])
    result = evaluation.run_cross_validation(ds, solver_config(opts), opts["folds"],
                                             opts["seed"], **kwargs)
    print(evaluation.format_table(result), file=out)
    if args.out:
        evaluation.write_report(result, args.out)
    return EXIT_OK


def cmd_compare(args, out):
    opts = resolve_options(args)
    kwargs = _cv_kwargs(opts, args)
    ds = parse_movielens(args.dataset, opts["format"])
    results = evaluation.compare_variants(ds, solver_config(opts), opts["folds"],
                                          opts["seed"], **kwargs)
    key = {"tab_100k": "100k", "colon_1m": "1m"}[opts["format"]]
    print(evaluation.format_comparison(results, key), file=out)
    if args.out:
        evaluation.write_report(results, args.out)
    return EXIT_OK


def cmd_predict(args, out):
    model = load_model(args.model)
    m, n = model.index_of(args.user, args.item)
    value = model.predict_many([m], [n])[0]
    print(f"{value:.4f}", file=out)
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "train": cmd_train,
    "cross-validate": cmd_cross_validate,
    "compare": cmd_compare,
    "predict": cmd_predict,
}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except UnknownIdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_ID
    except (ParseError, DataValidationError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
