"""Command-line front end.

Commands: ``validate``, ``norm``, ``ta-norm``, ``sweep``, ``assemble``,
``synthesize``, ``stability``, ``bench``.  Results go to stdout (or the
``-o`` file), diagnostics to stderr.

Exit codes: 0 success, 1 input or usage error, 2 numerical failure,
3 system not strongly stable.  ``DDAE_THREADS`` caps BLAS threads.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import benchmarks
from .asymptotic import reduce_delays, strong_norm_ta
from .errors import (
    AlgebraicLoop,
    AssumptionOneViolated,
    DdaeError,
    DimensionMismatch,
    InfeasibleStart,
    NotStable,
    ParseError,
)
from .interconnect import assemble, instantiate, load_plant, load_template
from .levelset import LevelSetOptions, strong_hinf_norm
from .model import DdaeSystem, partition, sigma_sweep, validate
from .stability import check_strong_stability
from .synthesis import OptimizeOptions, objective, optimize

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_UNSTABLE = 0, 1, 2, 3

log = logging.getLogger("ddae_hinf")


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    options: dict
    result: dict
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _options(args) -> dict:
    return {k: v for k, v in vars(args).items() if not callable(v)}


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None


def load_system(path: str) -> DdaeSystem:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return DdaeSystem.from_dict(doc)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _levelset_opts(args) -> LevelSetOptions:
    kw = dict(N=args.N, tol=args.tol, p_a=args.grid)
    if getattr(args, "plain", False):
        kw.update(plain=True, plain_wmax=args.wmax)
    return LevelSetOptions(**kw)


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    sys_ = load_system(args.path)
    rank = int(np.linalg.matrix_rank(sys_.E))
    try:
        bases = validate(sys_)
    except AssumptionOneViolated as exc:
        print(f"n = {sys_.n}, rank(E) = {rank}, nu = {sys_.n - rank}")
        print(f"assumption violated: U^T A_0 V is singular ({exc})", file=sys.stderr)
        return EXIT_INPUT
    print(f"n = {sys_.n}, rank(E) = {rank}, nu = {bases.nu}, delays = {list(sys_.delays)}")
    print("U^T A_0 V nonsingular: ok")
    return EXIT_OK


def cmd_norm(args) -> int:
    sys_ = load_system(args.path)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = strong_hinf_norm(sys_, _levelset_opts(args))
    notes = [str(w.message) for w in caught]
    if args.json:
        rep = RunReport("norm", _options(args), res.as_dict(), time.perf_counter() - t0, notes)
        _emit(rep.to_json(), args.output)
        return EXIT_OK
    label = "plain norm" if args.plain else "strong norm"
    lines = [f"{label}: {res.value:.4f}", f"branch: {res.branch}"]
    if res.omega_hat is not None and res.branch == "frequency":
        lines.append(f"omega_hat: {res.omega_hat:.4f}")
    if res.theta_hat is not None and res.branch == "asymptotic":
        lines.append("theta_hat: " + ", ".join(f"{t:.4f}" for t in res.theta_hat))
    if res.ta is not None:
        lines.append(f"Ta norm: {res.ta.value:.4f}")
    lines.append(f"levels: {len(res.trace)}, corrected: {res.corrected}")
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    _emit("\n".join(lines), args.output)
    return EXIT_OK


def cmd_ta_norm(args) -> int:
    sys_ = load_system(args.path)
    asys = reduce_delays(partition(sys_, validate(sys_)))
    res = strong_norm_ta(asys, args.grid)
    payload = {
        "value": res.value,
        "theta_hat": list(map(float, res.theta_hat)),
        "retained_delays": list(asys.retained),
        "corrected": res.corrected,
        "grid_value": res.grid_value,
    }
    if args.json:
        _emit(RunReport("ta-norm", _options(args), payload).to_json(), args.output)
    else:
        _emit(f"Ta strong norm: {res.value:.6f}\ntheta_hat: "
              + ", ".join(f"{t:.4f}" for t in res.theta_hat)
              + f"\nretained delays: {list(asys.retained)}", args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    if args.wmin > args.wmax:
        raise UsageError("--wmin must not exceed --wmax")
    if args.log and args.wmin <= 0:
        raise UsageError("--log needs --wmin > 0")
    sys_ = load_system(args.path)
    if args.points == 1:
        grid = np.array([args.wmin])
    elif args.log:
        grid = np.logspace(np.log10(args.wmin), np.log10(args.wmax), args.points)
    else:
        grid = np.linspace(args.wmin, args.wmax, args.points)
    curve = sigma_sweep(sys_, grid, k=args.k)
    k = curve.sigmas.shape[1]
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega"] + [f"sigma{i + 1}" for i in range(k)])
        for om, row in zip(curve.omega, curve.sigmas):
            w.writerow([f"{om:.9g}"] + [f"{s:.9g}" for s in row])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def cmd_assemble(args) -> int:
    plant = load_plant(_read_json(args.plant))
    tmpl = load_template(_read_json(args.controller))
    p = np.asarray(args.p, dtype=float) if args.p else tmpl.initial_point()
    pcl = assemble(plant, tmpl, check_at=p)
    sys_ = instantiate(pcl, p)
    doc = sys_.to_dict()
    lay = pcl.layout
    doc["layout"] = {k: [s.start, s.stop] for k, s in lay.blocks.items()}
    _emit(json.dumps(doc, indent=2), args.output)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    plant = load_plant(_read_json(args.plant))
    tmpl = load_template(_read_json(args.template))
    p0 = tmpl.initial_point()
    pcl = assemble(plant, tmpl, check_at=p0)
    lopts = LevelSetOptions(N=args.N, tol=args.tol, p_a=args.grid)
    oopts = OptimizeOptions(max_iter=args.max_iter, rng_seed=args.seed, levelset=lopts)
    t0 = time.perf_counter()
    p_star, xi_star, trace = optimize(pcl, p0, oopts)
    final = objective(pcl, p_star, lopts, want_grad=False)
    payload = {
        "p": p_star,
        "xi": xi_star,
        "branch": final.branch,
        "p0": p0,
        "trace": [{"p": t["p"], "xi": t["xi"], "branch": t["branch"], "phase": t["phase"]}
                  for t in trace],
    }
    rep = RunReport("synthesize", _options(args), payload, time.perf_counter() - t0)
    _emit(rep.to_json(), args.output)
    print(f"xi* = {xi_star:.6g} after {len(trace)} accepted iterates", file=sys.stderr)
    return EXIT_OK


def cmd_stability(args) -> int:
    sys_ = load_system(args.path)
    rep = check_strong_stability(sys_, args.N, args.grid)
    print(f"stable: {rep.stable}")
    print(f"spectral abscissa estimate: {rep.spectral_abscissa_estimate:.6g}")
    print(f"difference radius: {rep.difference_radius:.6g}")
    return EXIT_OK if rep.stable else EXIT_UNSTABLE


def cmd_bench(args) -> int:
    if args.list:
        for name, c in benchmarks.REGISTRY.items():
            print(f"{name:24s} published {c.published:<10g} {c.source}")
        return EXIT_OK
    if not args.name:
        raise UsageError("bench needs a NAME (or --list)")
    try:
        cases = benchmarks.select(args.name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    lopts = LevelSetOptions(N=args.N, tol=args.tol, p_a=args.grid)
    rows, code = [], EXIT_OK
    for c in cases:
        t0 = time.perf_counter()
        ev = objective(c.closed_loop(), c.p, lopts, want_grad=False)
        ok = bool(np.isfinite(ev.xi) and abs(ev.xi - c.published) <= c.tol)
        rows.append({"name": c.name, "achieved": ev.xi, "published": c.published,
                     "tol": c.tol, "match": ok, "branch": ev.branch, "note": ev.cause or c.note,
                     "seconds": time.perf_counter() - t0})
        if not np.isfinite(ev.xi):
            code = EXIT_UNSTABLE
    if args.json:
        _emit(json.dumps(rows, indent=2, default=_jsonable), args.output)
    else:
        for r in rows:
            tag = "match" if r["match"] else "MISMATCH"
            extra = f"  ({r['note']})" if r["note"] else ""
            print(f"{r['name']:24s} achieved {r['achieved']:.4f}  published {r['published']:.4f}"
                  f"  {tag}{extra}")
    return code


# ---------------------------------------------------------------- parser

def _add_numeric(p, tol=True):
    p.add_argument("--N", type=int, default=20, help="discretisation order (default 20)")
    if tol:
        p.add_argument("--tol", type=float, default=1e-3, help="relative level tolerance")
    p.add_argument("--grid", type=int, default=20, help="phase grid points per axis")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddae-hinf", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check dimensions and the index-one assumption")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("norm", help="strong H-infinity norm")
    p.add_argument("path")
    _add_numeric(p)
    p.add_argument("--plain", action="store_true", help="diagnostic plain-norm mode")
    p.add_argument("--wmax", type=float, default=1e4, help="plain-mode sweep limit")
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("ta-norm", help="strong norm of the asymptotic transfer function")
    p.add_argument("path")
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ta_norm)

    p = sub.add_parser("sweep", help="singular values on a frequency grid (CSV)")
    p.add_argument("path")
    p.add_argument("--wmin", type=float, default=0.0)
    p.add_argument("--wmax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--log", action="store_true", help="logarithmic grid")
    p.add_argument("--k", type=int, default=None, help="number of singular values")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("assemble", help="closed-loop DDAE from plant and controller JSON")
    p.add_argument("plant")
    p.add_argument("controller")
    p.add_argument("-p", type=float, nargs="*", help="parameter vector (default: template p0)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("synthesize", help="optimise template parameters")
    p.add_argument("plant")
    p.add_argument("template")
    _add_numeric(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=400)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("stability", help="strong stability check")
    p.add_argument("path")
    _add_numeric(p, tol=False)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bench", help="evaluate a registered benchmark")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    _add_numeric(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, DimensionMismatch, AlgebraicLoop, AssumptionOneViolated) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NotStable, InfeasibleStart) as exc:
        print(f"not strongly stable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (DdaeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
