"""Command line interface: ``ctcr simulate|estimate|interpolate|evaluate|benchmark``.

Exit codes: 0 success, 1 usage or parse error, 2 no convergence within
``max_iters``, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend, bench, io, lie, metrics, pipeline, synth
from .config import load_config
from .errors import (
    AngleNearPi,
    AngleTooLarge,
    CtcrError,
    DivergedNaN,
    NotPositiveDefinite,
)

log = logging.getLogger("ctcr")

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC = (NotPositiveDefinite, DivergedNaN, AngleNearPi, AngleTooLarge, ArithmeticError)

INTERP_FIELDS = (
    ["s", "t", "mode"]
    + [f"p{a}" for a in "xyz"]
    + [f"phi{a}" for a in "xyz"]
    + [f"eps{i}" for i in range(6)]
    + [f"varpi{i}" for i in range(6)]
    + [f"p{a}_3sigma" for a in "xyz"]
    + [f"phi{a}_3sigma" for a in "xyz"]
)


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- verbs --------------------------------------------------------------------


def cmd_simulate(args):
    spec = synth.TrajectorySpec.from_dict(io.load_json(args.spec))
    suite = synth.SensorSuite.from_dict(io.load_json(args.suite))
    seed = spec.seed if args.seed is None else args.seed
    ds = synth.sample_measurements(spec, suite, seed)
    _write(io.dumps(io.dataset_to_dict(ds)), args.out)
    log.info("wrote %d measurements", len(ds.measurements))
    return EXIT_OK


def cmd_estimate(args):
    cfg = load_config(args.config)
    ds = io.load_dataset(args.dataset)
    compute_cov = cfg.flags.compute_covariance and not args.no_covariance
    res = pipeline.estimate(ds, cfg, compute_cov, dataset_hash=io.dataset_hash(args.dataset))
    rep = res.report
    log.info(
        "%d iterations, final step %.3g, %.2f s", rep.iterations, rep.final_step_norm, rep.wall_time
    )
    _write(io.dumps(pipeline.result_to_dict(res), compact=True), args.out)
    if not rep.converged:
        log.warning("no convergence within %d iterations", cfg.grid.max_iters)
        return EXIT_NOCONV
    return EXIT_OK


def _queries(args, g):
    if args.queries:
        rows = np.loadtxt(args.queries, delimiter=",", ndmin=2, comments="#")
        return [(float(a), float(b)) for a, b in rows[:, :2]]
    if args.s is not None:
        t = np.linspace(g.t[0], g.t[-1], (len(g.t) - 1) * args.per_interval + 1)
        return [(args.s, float(v)) for v in t]
    if args.t is not None:
        s = np.linspace(g.s[0], g.s[-1], (len(g.s) - 1) * args.per_interval + 1)
        return [(float(v), args.t) for v in s]
    raise CtcrError("give --queries, --s or --t")


def cmd_interpolate(args):
    res = pipeline.result_from_dict(io.load_json(args.result), args.result)
    rows = []
    for s, t in _queries(args, res.grid):
        q = pipeline.query(res, s, t)
        x = q.state
        p = metrics.position(x.T)
        phi = lie.log_so3(x.T[:3, :3])
        sig = [float("nan")] * 6
        if q.cov is not None:
            # inertial position moves by -C^T rho under a left perturbation
            C = x.T[:3, :3]
            Pp = C.T @ q.cov[:3, :3] @ C
            var = np.r_[np.diag(Pp), np.diag(q.cov)[3:6]]
            sig = (3.0 * np.sqrt(np.clip(var, 0.0, None))).tolist()
        rows.append([s, t, q.mode, *p, *phi, *x.eps, *x.varpi, *sig])
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(out)
        w.writerow(INTERP_FIELDS)
        for r in rows:
            w.writerow([r[0], r[1], r[2]] + [repr(float(v)) for v in r[3:]])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_evaluate(args):
    res = pipeline.result_from_dict(io.load_json(args.result), args.result)
    ds = io.load_dataset(args.dataset)
    if ds.truth is None:
        raise CtcrError("dataset carries no ground truth")
    if res.dataset_hash and res.dataset_hash != io.dataset_hash(args.dataset):
        log.warning("result was estimated from a different dataset file")
    rep = metrics.evaluate(res, ds.truth)
    if args.csv:
        _write(rep.csv_header() + "\n" + rep.csv_row() + "\n", args.out)
    else:
        _write(json.dumps({"schema": 1, **rep.to_dict()}, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_benchmark(args):
    cfg = load_config(args.config)
    rows = bench.run(
        args.N, args.K, cfg, args.reps, args.seed or 0,
        progress=lambda N, K: log.info("timed N=%d K=%d", N, K),
    )
    _write(bench.to_csv(rows), args.out)
    fits = {st: bench.exponents(rows, st) for st in bench.STAGES}
    summary = {
        st: {
            "K": {str(k): v for k, v in f["K"].items()},
            "N": {str(k): v for k, v in f["N"].items()},
        }
        for st, f in fits.items()
    }
    if args.fit_out:
        Path(args.fit_out).write_text(json.dumps(summary, indent=2) + "\n")
    for st in ("factor", "iteration"):
        for axis in ("K", "N"):
            for key, val in fits[st][axis].items():
                other = "N" if axis == "K" else "K"
                log.info("%s exponent in %s (%s=%s): %.2f", st, axis, other, key, val)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _common(suppress):
    """Global flags; accepted before or after the verb."""
    c = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    c.add_argument("--seed", type=int, default=d(None), help="RNG seed (overrides the spec)")
    c.add_argument(
        "--config", default=d("sim_params"),
        help="config file, or builtin name sim_params / experiment_params",
    )
    c.add_argument("--out", default=d(None), help="output file (stdout if omitted)")
    c.add_argument(
        "--no-covariance", action="store_true", default=d(False), help="skip covariance extraction"
    )
    c.add_argument("--quiet", action="store_true", default=d(False), help="only report errors")
    c.add_argument("--backend", choices=("numba", "numpy"), default=d(None))
    return c


def build_parser():
    common = _common(suppress=True)
    p = argparse.ArgumentParser(
        prog="ctcr", description=__doc__.splitlines()[0], parents=[_common(suppress=False)]
    )
    sub = p.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="sample a synthetic dataset")
    sp.add_argument("spec")
    sp.add_argument("suite")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", parents=[common], help="estimate the rod state")
    sp.add_argument("dataset")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("interpolate", parents=[common], help="query an estimate off the grid")
    sp.add_argument("result")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--queries", help="CSV of s,t rows")
    g.add_argument("--s", type=float, help="dense time trace at this grid arclength")
    g.add_argument("--t", type=float, help="dense arclength trace at this grid time")
    sp.add_argument("--per-interval", type=int, default=10, help="samples per node interval")
    sp.set_defaults(func=cmd_interpolate)

    sp = sub.add_parser("evaluate", parents=[common], help="score an estimate against truth")
    sp.add_argument("result")
    sp.add_argument("dataset")
    sp.add_argument("--csv", action="store_true", help="emit a CSV row instead of JSON")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", parents=[common], help="time the solver over grid sizes")
    sp.add_argument("--N", type=int, nargs="+", default=[5, 9, 17, 33])
    sp.add_argument("--K", type=int, nargs="+", default=[60])
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--fit-out", help="write fitted exponents as JSON here")
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="ctcr: %(levelname)s: %(message)s",
    )
    if args.backend:
        _backend.set_backend(args.backend)
    try:
        return args.func(args)
    except NUMERIC as exc:
        msg = str(exc)
        if isinstance(exc, NotPositiveDefinite):
            msg += " (hint: a boundary factor on the base pose removes the gauge freedom)"
        log.error("%s: %s", type(exc).__name__, msg)
        return EXIT_NUMERIC
    except BrokenPipeError:
        return EXIT_OK
    except (CtcrError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
