"""Command-line interface.

Exit codes: 0 success, 1 fit or computation failure, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bench import PRESETS, plot_rows, preset, run_bench
from .bounds import BoundInputs, bound_report
from .design import (
    generate_net,
    nest,
    read_nested,
    read_points_csv,
    write_nested,
    write_points_csv,
)
from .errors import ArgumentError, FormatError, MsemuError, ResourceError
from .kernel import Kernel, RescaledKernel, Rescaling
from .multistep import fit, load_model, save_model
from .select import CRITERIA, SelectionSpec, stage_selector
from .testfunctions import TEST_FUNCTIONS, eval_test_function

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
JOBS_ENV = "MSEMU_JOBS"

log = logging.getLogger("msemu")


class InputError(Exception):
    """Bad flags or unreadable input files (exit code 2)."""


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def dump_json(obj, path):
    text = json.dumps(obj, indent=1, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _default_jobs():
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None


# -- commands -----------------------------------------------------------------

def cmd_gen_design(args):
    D = generate_net(args.base, args.m, args.s, seed=args.seed, scramble=not args.no_scramble)
    stages = args.stages or [D.n]
    nd = nest(D, stages)
    write_nested(args.out, nd)
    log.info("wrote %d points (%d stages) to %s", D.n, nd.J, args.out)
    return EXIT_OK


def cmd_eval(args):
    X = read_points_csv(args.points)
    y = eval_test_function(args.function, X)
    write_points_csv(args.out, X, values=np.atleast_1d(y))
    return EXIT_OK


def _load_design(path, stages):
    X = read_points_csv(path)
    if stages:
        return nest(X, stages)
    try:
        return read_nested(path)
    except FileNotFoundError:
        return nest(X, [X.shape[0]])


def _load_values(path, X):
    Xv, y = read_points_csv(path, with_values=True)
    if Xv.shape != X.shape:
        raise InputError(f"{path}: {Xv.shape[0]} points of dimension {Xv.shape[1]} do not match the "
                         f"design's {X.shape[0]} of dimension {X.shape[1]}")
    if not np.allclose(Xv, X, rtol=0, atol=1e-12):
        raise InputError(f"{path}: value points do not coincide with the design points")
    return y


def _stage_kernels(args, d, J):
    base = Kernel(args.kernel, d)
    if args.select == "none":
        if not args.theta:
            raise InputError("--select none needs --theta (one value per stage, or one for all)")
        th = args.theta if len(args.theta) == J else args.theta * J
        if len(th) != J:
            raise InputError(f"--theta has {len(args.theta)} values for {J} stages")
        return [RescaledKernel(base, Rescaling.scalar(t)) for t in th]
    spec = SelectionSpec(args.select, folds=args.folds, seed=args.seed, budget=args.budget,
                         grid_size=args.grid_size, refine_steps=args.refine_steps)
    return stage_selector(base, spec)


def cmd_fit(args):
    nd = _load_design(args.design, args.stages)
    y = _load_values(args.values, nd.points)
    kernels = _stage_kernels(args, nd.design.d, nd.J)
    m = fit(nd, y, kernels, tol=args.tol, jitter=args.jitter, reml=args.reml, mode=args.mode,
            design_ref=os.path.basename(args.design))
    save_model(m, args.out)
    if args.trace:
        dump_json(m.fit_meta.get("selection", []), args.trace)
    for st in m.stages:
        log.info("stage %d: n=%d theta=%s sigma2=%.6g", st.j, st.n, list(st.kernel.rescale.values), st.sigma2)
    return EXIT_OK


def cmd_predict(args):
    m = load_model(args.model)
    P = read_points_csv(args.points)
    if P.shape[1] != m.d:
        raise InputError(f"{args.points}: points have dimension {P.shape[1]}, model expects {m.d}")
    header = [f"x{i + 1}" for i in range(m.d)] + ["mean"]
    if args.variance:
        pd = m.predict_with_variance(P)
        cols = [pd.mean, pd.variance]
        header.append("variance")
    else:
        cols = [m.predict_batch(P)]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(P.shape[0]):
            w.writerow([repr(float(v)) for v in P[i]] + [repr(float(c[i])) for c in cols])
    return EXIT_OK


def cmd_bounds(args):
    m = load_model(args.model)
    inputs = BoundInputs(delta=args.delta, r=args.r, D=args.D)
    rep = bound_report(m, inputs, nominal=not args.no_nominal)
    dump_json(rep, args.report)
    return EXIT_OK


def cmd_bench(args):
    if args.preset == "schwefel-full" and not args.full_scale:
        raise InputError("the full-scale Schwefel run needs --full-scale (about 1e7 nonzeros per stage)")
    overrides = dict(function=args.function, base=args.base, m=args.m, s=args.s,
                     stages=tuple(args.stages) if args.stages else None, kernel=args.kernel,
                     criterion=args.select, budget=args.budget, grid_size=args.grid_size,
                     test_size=args.test_size, mode=args.mode, memory_budget=args.memory_budget,
                     seeds=tuple(args.seeds) if args.seeds else None)
    cfg = preset(args.preset, **overrides)
    if args.no_bounds:
        cfg.bounds_summary = False
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    report, timings = run_bench(cfg, jobs=jobs)
    dump_json(report, args.out)
    if args.plot_data:
        with open(args.plot_data, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["J", "seed", "mspe", "log10_mspe"])
            for row in plot_rows(report):
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    if args.timings:
        dump_json({"jobs": jobs, "fits": timings}, args.timings)
    for s in report["summary"]:
        log.info("J=%d median MSPE %s (%d ok)", s["J"], s["median_mspe"], s["n_ok"])
    return EXIT_FAIL if report["all_failed"] else EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="msemu", description="Multi-step kernel emulators and their error bounds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-design", help="write a scrambled (0,m,s)-net in base b as CSV")
    g.add_argument("--base", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--stages", type=_int_list, help="nested prefix sizes, e.g. 250,375,500,625")
    g.add_argument("--no-scramble", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_design)

    e = sub.add_parser("eval-function", help="evaluate a built-in test function at CSV points")
    e.add_argument("--function", required=True, choices=sorted(TEST_FUNCTIONS))
    e.add_argument("--points", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fit", help="fit a multi-step interpolator")
    f.add_argument("--design", required=True, help="design CSV (stage sidecar read if present)")
    f.add_argument("--values", required=True, help="CSV with columns x1..xd,y")
    f.add_argument("--stages", type=_int_list, help="override the sidecar's stage sizes")
    f.add_argument("--kernel", default="wendland-smooth",
                   choices=["gaussian", "wendland-smooth", "wendland-rough"])
    f.add_argument("--select", default="loo", choices=list(CRITERIA) + ["none"])
    f.add_argument("--theta", type=_float_list, help="fixed scalar re-scalings with --select none")
    f.add_argument("--budget", type=float, help="nonzero budget for fixed_sparsity")
    f.add_argument("--folds", type=int, default=10)
    f.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    f.add_argument("--grid-size", type=int, default=12)
    f.add_argument("--refine-steps", type=int, default=20)
    f.add_argument("--tol", type=float, default=1e-10)
    f.add_argument("--mode", default="auto", choices=["auto", "dense", "sparse"])
    f.add_argument("--jitter", action="store_true", help="allow a 1e-10 Phi(0) nugget on failure")
    f.add_argument("--reml", action="store_true", help="REML normalization of sigma^2")
    f.add_argument("--trace", help="write the selection trace JSON here")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict with a fitted model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--points", required=True)
    pr.add_argument("--variance", action="store_true")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    b = sub.add_parser("bounds", help="write the error-bound report for a model")
    b.add_argument("--model", required=True)
    b.add_argument("--delta", type=float, default=1e-15)
    b.add_argument("--r", type=float, default=0.5)
    b.add_argument("--D", type=float, default=None)
    b.add_argument("--no-nominal", action="store_true")
    b.add_argument("--report", default="-")
    b.set_defaults(func=cmd_bounds)

    be = sub.add_parser("bench", help="MSPE against number of stages on a test function")
    be.add_argument("--preset", default="franke", choices=sorted(PRESETS))
    be.add_argument("--function", choices=sorted(TEST_FUNCTIONS))
    be.add_argument("--base", type=int)
    be.add_argument("--m", type=int)
    be.add_argument("--s", type=int)
    be.add_argument("--seeds", type=_int_list)
    be.add_argument("--stages", type=_int_list)
    be.add_argument("--kernel", choices=["gaussian", "wendland-smooth", "wendland-rough"])
    be.add_argument("--select", choices=list(CRITERIA))
    be.add_argument("--budget", type=float)
    be.add_argument("--grid-size", type=int)
    be.add_argument("--test-size", type=int)
    be.add_argument("--mode", choices=["auto", "dense", "sparse"])
    be.add_argument("--memory-budget", type=float)
    be.add_argument("--full-scale", action="store_true", help="allow the full-size Schwefel preset")
    be.add_argument("--no-bounds", action="store_true", help="skip the per-stage bound summary")
    be.add_argument("--jobs", type=int, help=f"worker processes (default ${JOBS_ENV} or 1)")
    be.add_argument("--out", default="-")
    be.add_argument("--plot-data", help="CSV of J, seed, MSPE, log10 MSPE")
    be.add_argument("--timings", help="JSON sidecar with wall-clock timings")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, FormatError, ArgumentError, ResourceError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"msemu: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MsemuError as exc:
        print(f"msemu: {type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"msemu: diagnostics: {json.dumps(diag, default=str)}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
