"""Command-line front end.

Exit status: 0 on success, 1 on usage or input errors (including families
that do not satisfy a command's hypotheses), 2 when a certified inequality
fails.  Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builtins import BUILTINS
from .crossings import (TOL_KERNEL, TOL_X, almost_orthogonality, count_vs_integral, independence_windows,
                        locate_crossings, weyl_demo)
from .errors import MonoflowError, NotMonotone
from .family import (TOL_UNIT, GeneratorPath, LinearModel, TwoParamFamily, compute_D, estimate_bounds,
                     load_family)
from .flow import TOL_EIG, curves_to_csv, track
from .logarithm import duhamel_average, generator_monotone_check, lift_log
from .oracle import dense_scan_crossings
from .serialize import dumps
from .stability import stability_certificate

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2


class UsageError(MonoflowError):
    code = "usage"


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("family")
    src.add_argument("--spec", type=Path, help="family-spec JSON file")
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="named example family")
    src.add_argument("--b", type=float, default=0.5, help="parameter of sec4_counterexample")
    tol = common.add_argument_group("tolerances")
    tol.add_argument("--tol-kernel", type=_positive, default=TOL_KERNEL)
    tol.add_argument("--tol-unit", type=_positive, default=TOL_UNIT)
    tol.add_argument("--tol-x", type=_positive, default=TOL_X)
    tol.add_argument("--tol-eig", type=_positive, default=TOL_EIG)
    common.add_argument("--grid-points", type=int, default=101, help="grid for bound estimates")
    common.add_argument("--seed", type=int, default=0, help="random seed (MONOFLOW_SEED overrides)")
    common.add_argument("--jobs", type=int, default=1, help="worker cap (computations are sequential)")
    common.add_argument("-o", "--output", type=Path, help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="monoflow", description="Eigenphase flow of monotone unitary families.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    def interval(sp, required=True):
        sp.add_argument("--interval", nargs=2, type=float, metavar=("A", "B"), required=required)

    interval(add("bounds", "d_min, d_max, d_2 on an interval"))
    interval(add("flow", "tracked eigenphase branches as CSV"))
    sp = add("crossings", "crossing points with multiplicities")
    interval(sp)
    sp.add_argument("--with-basis", action="store_true")
    sp = add("count", "crossing count against the trace integral")
    interval(sp)
    sp.add_argument("--closed", choices=["right", "open"], default="right")
    sp.add_argument("--quad-order", type=int, default=8)
    sp = add("weyl", "crossing counts of exp(ixL)U0 on [0, B]")
    sp.add_argument("--L", nargs="+", type=float, help="diagonal of L (else taken from --spec)")
    sp.add_argument("--B-max", type=_positive, required=True)
    sp.add_argument("--points", type=int, default=10)
    sp = add("stability", "distance of a near-kernel vector to nearby kernels")
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--eps-prime", type=_positive, default=0.1)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--vector", type=Path, help="JSON list of entries ([re, im] or real)")
    g.add_argument("--synthesize-noise", type=float, metavar="ETA",
                   help="kernel vector of the nearest crossing plus noise of norm ETA")
    interval(sp, required=False)
    sp.add_argument("--strict", action="store_true", help="refuse when the hypotheses fail")
    sp.add_argument("--reading", choices=["printed", "short"], default="printed")
    sp = add("log", "generator derivative against its Duhamel average")
    sp.add_argument("--at", type=float, default=0.0)
    sp.add_argument("--quad-order", type=int, default=None)
    interval(sp, required=False)
    sp = add("twoparam", "crossing curves of a two-parameter family")
    sp.add_argument("--rect", nargs=4, type=float, metavar=("XLO", "XHI", "YLO", "YHI"),
                    default=[-0.1, 0.1, -0.1, 0.1])
    sp.add_argument("--n-y", type=int, default=41)
    sp.add_argument("--csv", type=Path, help="also write curve samples as CSV")
    sp.add_argument("--with-projections", action="store_true")
    interval(add("verify", "run the property checks on a family"))
    sp = add("oracle", "brute-force crossing scan")
    interval(sp)
    sp.add_argument("--n", type=int, default=10_000)
    return p


def _seed(args) -> int:
    env = os.environ.get("MONOFLOW_SEED")
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError("MONOFLOW_SEED must be an integer", value=env) from None


def _family(args):
    if (args.spec is None) == (args.builtin is None):
        raise UsageError("give exactly one of --spec and --builtin")
    if args.spec is not None:
        try:
            return load_family(args.spec)
        except OSError as exc:
            raise UsageError(f"cannot read {args.spec}: {exc.strerror}") from None
    if args.builtin == "sec4_counterexample":
        try:
            return BUILTINS[args.builtin](args.b)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return BUILTINS[args.builtin]()


def _one_param(fam):
    if isinstance(fam, TwoParamFamily):
        raise UsageError("this command needs a one-parameter family")
    return fam


def _interval(args):
    a, b = args.interval
    if not a < b:
        raise UsageError("interval must satisfy A < B", interval=[a, b])
    return a, b


def _bounds(args, fam, interval):
    return estimate_bounds(fam, interval, grid_points=args.grid_points)


def _read_vector(path, dim):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read vector file {path}: {exc}") from None
    if not isinstance(data, list):
        raise UsageError("vector file must hold a JSON list")
    try:
        v = np.array([complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in data])
    except (TypeError, IndexError, ValueError) as exc:
        raise UsageError(f"cannot parse vector: {exc}") from None
    if v.shape != (dim,):
        raise UsageError(f"vector has length {v.size}, expected {dim}")
    return v


# --------------------------------------------------------------------------- commands

def cmd_bounds(args):
    fam = _one_param(_family(args))
    return _bounds(args, fam, _interval(args)).__dict__, EXIT_OK


def cmd_flow(args):
    fam = _one_param(_family(args))
    iv = _interval(args)
    return curves_to_csv(track(fam, iv, _bounds(args, fam, iv))), EXIT_OK


def cmd_crossings(args):
    fam = _one_param(_family(args))
    iv = _interval(args)
    cs = locate_crossings(fam, iv, _bounds(args, fam, iv), tol_x=args.tol_x, tol_kernel=args.tol_kernel)
    return {"interval": list(iv), "crossings": [c.to_dict(args.with_basis) for c in cs]}, EXIT_OK


def cmd_count(args):
    fam = _one_param(_family(args))
    iv = _interval(args)
    rep = count_vs_integral(fam, iv, _bounds(args, fam, iv), quad_order=args.quad_order, closed=args.closed)
    return rep.to_dict(), EXIT_VIOLATION if rep.violated else EXIT_OK


def cmd_weyl(args):
    if args.L is not None:
        L, U0 = np.diag(args.L), None
    else:
        fam = _family(args)
        if not isinstance(fam, LinearModel):
            raise UsageError("weyl needs --L or a model_linear spec")
        L, U0 = fam.L, fam.U0
    rows = weyl_demo(L, args.B_max, U0, args.points)
    m = L.shape[0]
    out = [{"B": b, "count": c, "weyl_term": w, "discrepancy": abs(c - w)} for b, c, w in rows]
    bad = any(r["discrepancy"] >= m for r in out)
    return {"trace_L": float(np.trace(L).real), "M": m, "rows": out}, EXIT_VIOLATION if bad else EXIT_OK


def cmd_stability(args):
    fam = _one_param(_family(args))
    x0 = args.x0
    iv = _interval(args) if args.interval else (x0 - 1.0, x0 + 1.0)
    bounds = _bounds(args, fam, iv)
    if args.vector is not None:
        phi = _read_vector(args.vector, fam.dim)
    else:
        cs = locate_crossings(fam, iv, bounds, tol_kernel=args.tol_kernel)
        if not cs:
            raise UsageError("no crossing in the interval to synthesize a vector from")
        c = min(cs, key=lambda c: abs(c.x - x0))
        rng = np.random.default_rng(_seed(args))
        noise = rng.standard_normal(fam.dim) + 1j * rng.standard_normal(fam.dim)
        phi = c.kernel_basis[:, 0] + args.synthesize_noise * noise / np.linalg.norm(noise)
    rep = stability_certificate(fam, x0, phi, args.eps_prime, bounds, tol_kernel=args.tol_kernel,
                                strict=args.strict, reading=args.reading)
    out = rep.to_dict()
    ok = rep.dist_ok and rep.defect_ok and (rep.model_case is None or rep.model_case["ok"])
    if rep.ladder_status == "ok":
        ok = ok and all(v["ok"] for v in rep.chain.values()) and rep.statement_a["ok"]
    return out, EXIT_OK if ok else EXIT_VIOLATION


def cmd_log(args):
    fam = _one_param(_family(args))
    if not isinstance(fam, GeneratorPath):
        raise UsageError("log needs a generator_path family")
    x = args.at
    d = compute_D(fam, x)
    a, ap = fam.generator(x), fam.generator(x, 1)
    avg, order = duhamel_average(a, ap, args.quad_order, return_order=True)
    diff = float(np.linalg.norm(d - avg, 2))
    out = {"x": x, "D": d, "duhamel_average": avg, "quadrature_order": order, "difference": diff,
           "lambda_min_A_prime": float(np.linalg.eigvalsh(ap)[0]),
           "lambda_min_D": float(np.linalg.eigvalsh(d)[0])}
    ok = diff <= 1e-10
    if args.interval:
        iv = _interval(args)
        lift = lift_log(fam, iv, fam.generator(iv[0]), iv[0], tol_unit=args.tol_unit)
        gen_err = max(float(np.linalg.norm(g - fam.generator(float(t)), 2)) for t, g in zip(lift.x, lift.generators))
        chk = generator_monotone_check(fam, iv)
        out["lift"] = {"samples": len(lift.x), "max_step": float(lift.defects.max(initial=0.0)),
                       "max_generator_difference": gen_err}
        out["monotone_check"] = {k: chk[k] for k in ("A_prime_positive", "D_positive", "implication_holds")}
        ok = ok and chk["implication_holds"]
    return out, EXIT_OK if ok else EXIT_VIOLATION


def cmd_twoparam(args):
    from .two_param import (curve_projections, kernel_agreement, positivity, projection_sum_check,
                           trace_curves)

    fam = _family(args)
    if not isinstance(fam, TwoParamFamily):
        raise UsageError("twoparam needs a two-parameter family")
    lam = positivity(fam)
    if not lam > 0:
        raise NotMonotone("positivity hypothesis fails at the base point", base=list(fam.base), lambda_min=lam)
    xlo, xhi, ylo, yhi = args.rect
    if not (xlo < xhi and ylo < yhi):
        raise UsageError("rectangle must satisfy XLO < XHI and YLO < YHI")
    res = trace_curves(fam, args.rect, n_y=args.n_y)
    limits, curves = [], []
    for c in res.curves:
        entry = {"branch": c.branch, "through_base": c.through_base, "slope": c.slope,
                 "linear_slope": c.linear_slope, "samples": len(c.y),
                 "max_sigma_min": max(c.sigma_min)}
        if c.through_base:
            pr = curve_projections(c, fam)
            limits.append(pr.limit)
            if args.with_projections:
                entry["projection_limit"] = pr.limit
        if args.with_projections:
            entry["y"], entry["x"] = c.y, c.x
        curves.append(entry)
    grid = [(x, y) for x in np.linspace(xlo, xhi, 9) for y in np.linspace(ylo, yhi, 9)]
    agree = kernel_agreement(fam, grid, tol_kernel=args.tol_kernel)
    if args.csv:
        args.csv.write_text(res.to_csv(), encoding="utf-8")
    out = {"base": list(fam.base), "lambda_min": lam, "linear_slopes": res.linear_slopes, "curves": curves,
           "ambiguities": res.ambiguities, "projection_sum": projection_sum_check(limits, fam),
           "schur_agreement": all(a["agree"] for a in agree)}
    ok = out["schur_agreement"] and all(e["max_sigma_min"] <= args.tol_kernel for e in curves)
    return out, EXIT_OK if ok else EXIT_VIOLATION


def cmd_verify(args):
    fam = _one_param(_family(args))
    iv = _interval(args)
    bounds = _bounds(args, fam, iv)
    checks = {}
    curves = track(fam, iv, bounds)
    vel = np.concatenate([c.velocity for c in curves])
    checks["velocity_bounds"] = {"min": float(vel.min()), "max": float(vel.max()),
                                 "ok": bool(vel.min() >= bounds.d_min - 1e-8 and vel.max() <= bounds.d_max + 1e-8)}
    cs = locate_crossings(fam, iv, bounds, tol_x=args.tol_x, tol_kernel=args.tol_kernel)
    rep = count_vs_integral(fam, iv, bounds, crossings=cs)
    checks["counting"] = {**rep.to_dict(), "ok": not rep.violated}
    ind = independence_windows(cs, bounds, fam.dim)
    checks["independence"] = {"windows": len(ind), "ok": all(c.independent for c in ind)}
    pairs = almost_orthogonality(fam, cs, bounds, tol_kernel=args.tol_kernel)
    checks["almost_orthogonality"] = {"pairs": len(pairs), "ok": all(p.ok for p in pairs)}
    scan = dense_scan_crossings(fam, iv, bounds, tol_kernel=args.tol_kernel)
    fast = [(c.x, c.multiplicity) for c in cs if iv[0] - 1e-8 <= c.x <= iv[1] + 1e-8]
    slow = [(c.x, c.multiplicity) for c in scan.crossings]
    agree = len(fast) == len(slow) and all(abs(p - q) <= 1e-8 and m == n for (p, m), (q, n) in zip(fast, slow))
    checks["oracle_agreement"] = {"fast": len(fast), "oracle": len(slow), "ok": agree}
    ok = all(c["ok"] for c in checks.values())
    return {"interval": list(iv), "bounds": bounds.__dict__, "checks": checks, "ok": ok}, \
        EXIT_OK if ok else EXIT_VIOLATION


def cmd_oracle(args):
    fam = _one_param(_family(args))
    iv = _interval(args)
    scan = dense_scan_crossings(fam, iv, _bounds(args, fam, iv), n=args.n, tol_kernel=args.tol_kernel)
    return {"interval": list(iv), "finest_spacing": scan.finest_spacing,
            "crossings": [{"x": c.x, "multiplicity": c.multiplicity} for c in scan.crossings]}, EXIT_OK


COMMANDS = {
    "bounds": cmd_bounds, "flow": cmd_flow, "crossings": cmd_crossings, "count": cmd_count,
    "weyl": cmd_weyl, "stability": cmd_stability, "log": cmd_log, "twoparam": cmd_twoparam,
    "verify": cmd_verify, "oracle": cmd_oracle,
}


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if args.grid_points < 3:
            raise UsageError("--grid-points must be at least 3")
        result, code = COMMANDS[args.command](args)
    except MonoflowError as exc:
        sys.stderr.write(dumps(exc.to_dict(), indent=None) + "\n")
        return EXIT_INPUT
    text = result if isinstance(result, str) else dumps(result) + "\n"
    _emit(text, args.output)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
