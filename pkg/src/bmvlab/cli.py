"""Command-line front end.

Every artifact carries the tool version and the resolved configuration, so
a run can be repeated from its output alone.  Exit status is 0 on success,
2 for invalid input and 3 for numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__, density, hyperfun, mcsim, paths, verify
from .core import BMVError, DegenerateB, NumericalError, ValidationError, canonicalize, load_problem

SCHEMA_VERSION = 1
DEFAULTS = {"nmax": 20, "tol": 1e-10, "grid": 200, "seed": 42}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class Output:
    def __init__(self, args, config):
        self.args = args
        self.config = config

    def _write(self, text):
        if self.args.out:
            with open(self.args.out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)

    def json(self, payload):
        doc = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "config": self.config}
        doc.update(_jsonable(payload))
        self._write(json.dumps(doc, indent=2, sort_keys=False) + "\n")

    def csv(self, header, rows, extra=None):
        buf = io.StringIO()
        buf.write(f"# bmvlab {__version__}\n")
        buf.write("# config " + json.dumps(self.config, sort_keys=True) + "\n")
        if extra is not None:
            buf.write("# " + json.dumps(_jsonable(extra), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self._write(buf.getvalue())

    def emit(self, header, rows, payload, default="csv"):
        if (self.args.format or default) == "json":
            self.json(payload)
        else:
            self.csv(header, rows, payload.get("summary"))


def _config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "out"):
            continue
        out[k] = v
    return out


def _z_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--z expects comma-separated numbers, got {text!r}") from None


def _problem(args):
    if not args.problem:
        raise ValidationError("--problem is required")
    try:
        return load_problem(args.problem)
    except OSError as exc:
        raise ValidationError(f"cannot read problem file {args.problem!r}: {exc.strerror}") from None


def _policy(args, cf):
    if args.nmax == "auto":
        return density.select_policy(cf, args.tol)
    try:
        n_max = int(args.nmax)
    except ValueError:
        raise ValidationError(f"--nmax must be an integer or 'auto', got {args.nmax!r}") from None
    return density.TruncationPolicy(n_max=n_max, tol=args.tol)


# --------------------------------------------------------------------------
# commands

def _build(args):
    p = _problem(args)
    cf = canonicalize(p)
    if cf.degenerate:
        raise DegenerateB(f"B = diag{tuple(p.b.tolist())} has tied entries, so the measure has no density "
                          "part to sample; run `certify` for the trivial-case certificate")
    tp = _policy(args, cf)
    m = density.build_measure(p, args.grid, tp, method=args.method, layout=args.layout)
    return p, m


def cmd_density(args, out):
    p, m = _build(args)
    rows = [(x, lab, v, m.tail_bound) for x, lab, v in zip(m.density_x, m.interval, m.density_psi)]
    payload = {"summary": {"n_max": m.info["n_max"], "tail_bound": m.tail_bound},
               "density": [{"x": r[0], "interval": r[1], "psi": r[2]} for r in rows]}
    out.emit(["x", "interval", "psi", "tail_bound"], rows, payload)


def cmd_measure(args, out):
    p, m = _build(args)
    out.json({
        "atoms": [{"location": loc, "weight": w} for loc, w in m.atoms],
        "density": [{"x": x, "interval": lab, "psi": v, "weight": w}
                    for x, lab, v, w in zip(m.density_x, m.interval, m.density_psi, m.density_weights)],
        "breakpoints": m.breakpoints,
        "tail_bound": m.tail_bound,
        "total_mass": m.total_mass(),
        "info": m.info,
    })


def cmd_transform_check(args, out):
    p = _problem(args)
    zs = _z_list(args.z or "0,0.5,1,2,5")
    cf = canonicalize(p)
    report = {"z": zs, "trace": [verify.trace_exp(p, z) for z in zs]}
    if not cf.degenerate:
        tp = _policy(args, cf)
        grid = max(int(args.grid), 64)
        m = density.build_measure(p, grid, tp, method=args.method, layout=args.layout)
        lap = [verify.laplace_of_measure(m, z) for z in zs]
        rel = [abs(a - b) / b for a, b in zip(lap, report["trace"])]
        report.update({"laplace": lap, "relative_error": rel, "max_relative_error": max(rel),
                       "n_max": tp.n_max, "tail_bound": m.tail_bound})
    bern = verify.bernstein_checks(p)
    report["bernstein"] = {k: v for k, v in bern.items() if k != "rows"}
    report["invariance"] = verify.invariance_checks(p, zs)
    out.json(report)


def cmd_paths(args, out):
    if args.paths_cmd == "count":
        p1, total = paths.count_paths(args.k, args.l, args.m)
        out.json({"k": args.k, "l": args.l, "m": args.m, "P1": p1, "P": total})
        return
    if args.format == "json":
        out.json({"d": args.d, "n": args.n, "paths": [list(g) for g in paths.iter_paths(args.d, args.n)],
                  "cycle_count": paths.cycle_count(args.d, args.n)})
        return
    buf = io.StringIO()
    for g in paths.iter_paths(args.d, args.n):
        buf.write(" ".join(str(s) for s in g) + "\n")
    out._write(buf.getvalue())


def cmd_identities(args, out):
    report = hyperfun.SUITES[args.suite]()
    out.json({"suite": args.suite, "report": report})


def _mc_config(args):
    return mcsim.MCConfig(samples=args.samples, seed=args.seed)


def cmd_simulate(args, out):
    p = _problem(args)
    cfg = _mc_config(args)
    if args.histogram:
        h = mcsim.density_histogram(p, args.bins, cfg)
        rows = [(lo, hi, e, s) for lo, hi, e, s in zip(h.edges[:-1], h.edges[1:], h.estimate, h.std_error)]
        payload = {"summary": {"atoms": list(zip(h.atom_locations, h.atom_estimates, h.atom_std_errors))},
                   "bins": [{"lo": r[0], "hi": r[1], "estimate": r[2], "std_error": r[3]} for r in rows]}
        out.emit(["bin_lo", "bin_hi", "estimate", "std_error"], rows, payload)
        return
    zs = _z_list(args.z if args.z is not None else "0")
    results = []
    for z in zs:
        est, se = mcsim.fk_trace_estimate(p, z, cfg)
        exact = verify.trace_exp(p, z)
        results.append({"z": z, "estimate": est, "std_error": se, "exact": exact,
                        "sigmas": abs(est - exact) / se if se > 0 else 0.0})
    out.json(results[0] if len(results) == 1 else {"results": results})


def cmd_certify(args, out):
    out.json(verify.certificate(_problem(args)).to_dict())


def cmd_counterexample(args, out):
    n = int(args.grid)
    xs = np.linspace(0.01, 0.99, n)
    r = verify.counterexample(args.eps, xs, n_max=int(args.nmax) if args.nmax != "auto" else 8)
    rows = list(zip(r["x"], r["scaled"], r["polynomial"], r["scaled"] - r["polynomial"]))
    payload = {"summary": {"eps": r["eps"], "n_max": r["n_max"], "max_abs_diff": r["max_abs_diff"],
                           "negative_near_zero": r["negative_near_zero"]},
               "x": r["x"], "scaled": r["scaled"], "polynomial": r["polynomial"]}
    out.emit(["x", "scaled_density", "polynomial", "difference"], rows, payload)


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmvlab", description="BMV measures of 3x3 problems")
    ap.add_argument("--version", action="version", version=f"bmvlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, problem=True, fmt=True):
        if problem:
            sp.add_argument("--problem", help="JSON file with keys A (3x3) and B (3 diagonal entries)")
        sp.add_argument("--out", help="output file (default stdout)")
        if fmt:
            sp.add_argument("--format", choices=("csv", "json"))

    def truncation(sp):
        sp.add_argument("--nmax", default=str(DEFAULTS["nmax"]), help="longest loop kept, or 'auto'")
        sp.add_argument("--tol", type=float, default=DEFAULTS["tol"], help="bound on the truncation tail")
        sp.add_argument("--grid", type=int, default=DEFAULTS["grid"], help="density points per interval")
        sp.add_argument("--method", choices=density.METHODS, default="le12")
        sp.add_argument("--layout", choices=("gauss", "uniform"), default="gauss")

    for name, fn, hlp in (("density", cmd_density, "sample the density as CSV"),
                          ("measure", cmd_measure, "atoms and density as JSON")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, fmt=(name == "density"))
        truncation(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("transform-check", help="Laplace round trip, derivative signs, invariances")
    common(sp, fmt=False)
    truncation(sp)
    sp.add_argument("--z", default="0,0.5,1,2,5", help="comma-separated z values")
    sp.set_defaults(func=cmd_transform_check, grid=64, nmax="auto")

    sp = sub.add_parser("paths", help="loop counts and enumeration")
    psub = sp.add_subparsers(dest="paths_cmd", required=True)
    pc = psub.add_parser("count")
    pc.add_argument("--k", type=int, required=True)
    pc.add_argument("--l", type=int, required=True)
    pc.add_argument("--m", type=int, required=True)
    common(pc, problem=False, fmt=False)
    pc.set_defaults(func=cmd_paths)
    pe = psub.add_parser("enum")
    pe.add_argument("--d", type=int, default=3)
    pe.add_argument("--n", type=int, required=True)
    common(pe, problem=False)
    pe.set_defaults(func=cmd_paths)

    sp = sub.add_parser("identities", help="run a special-function identity suite")
    sp.add_argument("--suite", choices=sorted(hyperfun.SUITES), required=True)
    sp.add_argument("--grid", default="default", choices=("default",))
    common(sp, problem=False, fmt=False)
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("simulate", help="Monte Carlo estimates")
    common(sp)
    sp.add_argument("--z", default=None, help="comma-separated z values (default 0)")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    sp.add_argument("--histogram", action="store_true", help="estimate bin averages of the density")
    sp.add_argument("--bins", type=int, default=64)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("certify", help="sufficient conditions for a nonnegative measure")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("counterexample", help="negative diagonal-entry density for small eps")
    common(sp, problem=False)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--grid", type=int, default=100)
    sp.add_argument("--nmax", default="8")
    sp.set_defaults(func=cmd_counterexample)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    out = Output(args, _config(args))
    try:
        args.func(args, out)
    except ValidationError as exc:
        print(f"bmvlab: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"bmvlab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except BMVError as exc:
        print(f"bmvlab: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
