"""Command line front end.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import BandwidthRule, bandwidth_nobs, bandwidth_rot, isotropic_variance
from .dimension import cv_curve
from .errors import CVEError, DegenerateSliceError, InvalidArgumentError, InvalidDimensionError
from .gradients import (
    finite_diff_check,
    grad_Ln,
    grad_Ln_weighted,
    grad_Ltilde,
)
from .manifold import random_stiefel
from .objective import (
    DataSet,
    KernelSpec,
    Ltilde_n,
    Objective,
    objective_Ln,
    objective_Ln_weighted,
    oracle_L_toy,
)
from .optimizer import VARIANTS, OptimConfig, fit_cve, ordered_map
from .simsuite import BASELINE, MODELS, make_model, run_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("cve")


class InputError(Exception):
    pass


def fmt(x):
    return format(float(x), ".17g")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(command, config, seed, started, input_path=None):
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "input_sha256": file_digest(input_path) if input_path else None,
        "version": __version__,
        "elapsed_seconds": round(time.perf_counter() - started, 6),
    }


def read_csv(path, response):
    """Load ``(y, X, predictor_names)`` from a headed, numeric CSV."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        if response not in header:
            raise InputError(f"response column {response!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"row {lineno}, column {name!r}: {cell!r} is not numeric") from None
                if not math.isfinite(v):
                    raise InputError(f"row {lineno}, column {name!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 3:
        raise InputError(f"{path}: need at least 3 data rows, got {len(rows)}")
    A = np.array(rows)
    j = header.index(response)
    names = [h for i, h in enumerate(header) if i != j]
    if not names:
        raise InputError("no predictor columns")
    return A[:, j], np.delete(A, j, axis=1), names


def standardize(y, X, names):
    sx = X.std(axis=0, ddof=1)
    flat = [n for n, s in zip(names, sx) if not s > 0]
    if flat:
        raise InputError(f"constant predictor column(s) cannot be standardized: {flat}")
    sy = y.std(ddof=1)
    if not sy > 0:
        raise InputError("constant response cannot be standardized")
    return (y - y.mean()) / sy, (X - X.mean(axis=0)) / sx


def load_data(args):
    y, X, names = read_csv(args.input, args.response)
    if args.standardize:
        y, X = standardize(y, X, names)
    return DataSet(y, X), names


def parse_bandwidth(text):
    try:
        return BandwidthRule.parse(text)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def threads_default():
    try:
        return max(1, int(os.environ.get("CVE_THREADS", "1")))
    except ValueError:
        return 1


def optim_config(args):
    return OptimConfig(tau0=args.tau0, gamma=args.gamma, tol=args.tol, maxit=args.maxit,
                       m=args.starts, seed=args.seed, threads=args.threads)


def config_dict(cfg):
    return {"tau0": cfg.tau0, "gamma": cfg.gamma, "tol": cfg.tol, "maxit": cfg.maxit,
            "m": cfg.m, "seed": cfg.seed}


def _finite(obj):
    # JSON has no NaN; an empty aggregate (every replication failed) becomes null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_finite(obj), fh, indent=1, allow_nan=False)
        fh.write("\n")


def write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def cmd_fit(args):
    started = time.perf_counter()
    data, names = load_data(args)
    if not 1 <= args.dim < data.p:
        raise InputError(f"invalid dimension --dim {args.dim}: need 1 <= k < p = {data.p}")
    cfg = optim_config(args)
    fit = fit_cve(data, args.dim, args.variant, args.bandwidth, cfg)
    result = {
        "variant": fit.variant,
        "k": fit.k,
        "predictors": names,
        "standardized": args.standardize,
        "bandwidth": fit.h,
        "objective": fit.objective,
        "Bhat": fit.Bhat.T.tolist(),
        "Vq": fit.Vq.T.tolist(),
        "all_stalled": fit.all_stalled,
        "starts": [s.as_dict() for s in fit.starts],
    }
    conf = dict(config_dict(cfg), variant=args.variant, dim=args.dim, response=args.response,
                bandwidth=str(args.bandwidth), standardize=args.standardize)
    write_json(args.out, {"manifest": manifest("fit", conf, args.seed, started, args.input),
                          "result": result})
    print(f"objective {fmt(fit.objective)}  bandwidth {fmt(fit.h)}  -> {args.out}")
    if fit.all_stalled:
        print("error: every start stalled without an accepted step", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_dim(args):
    started = time.perf_counter()
    data, _ = load_data(args)
    lmax = args.lmax if args.lmax is not None else min(data.p, 10)
    if not 1 <= lmax <= data.p:
        raise InputError(f"invalid --lmax {lmax}: need 1 <= lmax <= p = {data.p}")
    cfg = optim_config(args)
    curve = cv_curve(data, lmax, args.variant, args.bandwidth, cfg)
    out = Path(args.out)
    write_csv(out / "cv_curve.csv", ["l", "cv"], curve.values)
    conf = dict(config_dict(cfg), variant=args.variant, lmax=lmax, response=args.response,
                bandwidth=str(args.bandwidth), standardize=args.standardize)
    write_json(out / "dim.json", {
        "manifest": manifest("dim", conf, args.seed, started, args.input),
        "result": {"khat": curve.khat, "cv": [[l, v] for l, v in curve.values],
                   "fallbacks": curve.fallbacks},
    })
    print(f"khat {curve.khat}")
    return EXIT_OK


def _models(text):
    ids = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in ids if m not in MODELS]
    if bad or not ids:
        raise InputError(f"unknown model id(s) {bad or text!r}; choose from {', '.join(MODELS)}")
    return ids


def cmd_simulate(args):
    started = time.perf_counter()
    ids = _models(args.model)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in VARIANTS + (BASELINE,)]
    if bad or not variants:
        raise InputError(f"unknown variant(s) {bad}; choose from {VARIANTS + (BASELINE,)}")
    if args.reps < 1:
        raise InputError("--reps must be >= 1")
    specs = [make_model(m, n=args.n, p=args.p, pmix=args.pmix, lam=args.lam,
                        error_params=args.error_params) for m in ids]
    cfg = OptimConfig(tau0=args.tau0, gamma=args.gamma, tol=args.tol, maxit=args.maxit,
                      m=args.starts, seed=args.seed)
    summary = run_study(specs, variants, args.reps, args.seed, cfg, dimension=args.dimension,
                        lmax=args.lmax, bandwidth=args.bandwidth, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary.write_csv(out / "summary.csv", out / "errors.csv")
    conf = dict(config_dict(cfg), models=ids, variants=variants, reps=args.reps,
                n=[s.n for s in specs], p=args.p, pmix=args.pmix, lam=args.lam,
                error_params=args.error_params, dimension=args.dimension, lmax=args.lmax,
                bandwidth=str(args.bandwidth))
    write_json(out / "results.json", {
        "manifest": manifest("simulate", conf, args.seed, started),
        "result": {"summary": summary.rows, "replications": summary.records},
    })
    for r in summary.rows:
        print(f"{r['model']} {r['variant']:>6}  mean_err {r['mean_err']:.4f}  "
              f"sd_err {r['sd_err']:.4f}  reps {r['reps']}  failures {r['failures']}")
    return EXIT_OK


def toy_data(n, eta, rng):
    X = rng.standard_normal((n, 2))
    return DataSet(X[:, 0] + eta * rng.standard_normal(n), X)


def cmd_sweep_theta(args):
    started = time.perf_counter()
    if args.n < 3 or args.grid < 1:
        raise InputError("need --n >= 3 and --grid >= 1")
    rng = np.random.default_rng(args.seed)
    data = toy_data(args.n, args.eta, rng)
    h = bandwidth_rot(data.n, 2, 1, data.X)
    obj = Objective(data, KernelSpec("gaussian", h))

    def row(i):
        theta = math.pi * i / args.grid
        v = np.array([math.cos(theta), math.sin(theta)])
        return theta, obj(v[:, None]), oracle_L_toy(v, np.eye(2), [1.0, 0.0], args.eta ** 2)

    rows = ordered_map(row, list(range(args.grid + 1)), args.threads)
    write_csv(args.out, ["theta", "Ln", "L"], rows)
    conf = {"n": args.n, "eta": args.eta, "grid": args.grid, "bandwidth": h}
    write_json(str(args.out) + ".manifest.json", manifest("sweep-theta", conf, args.seed, started))
    print(f"max |Ln - L| = {max(abs(a - b) for _, a, b in rows):.4f}  -> {args.out}")
    return EXIT_OK


def gradcheck_instance(seed, i, constant_response=False):
    """``[(name, discrepancy), ...]`` for every analytic gradient on instance ``i``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
    n = int(rng.integers(10, 31))
    p = int(rng.integers(2, 7))
    q = int(rng.integers(1, p))
    X = rng.standard_normal((n, p))
    y = np.full(n, 1.5) if constant_response else np.sin(X[:, 0]) + 0.3 * rng.standard_normal(n)
    data = DataSet(y, X)
    kern = KernelSpec("gaussian", float(rng.uniform(0.5, 2.0)))
    V = random_stiefel(p, q, rng)
    s0 = X[int(rng.integers(n))] + 0.1 * rng.standard_normal(p)
    return [
        ("grad_Ltilde", finite_diff_check(
            lambda W: Ltilde_n(data, W, s0, kern), grad_Ltilde(data, V, s0, kern), V)),
        ("grad_Ln", finite_diff_check(
            lambda W: objective_Ln(data, W, kern), grad_Ln(data, V, kern), V)),
        ("grad_Ln_weighted", finite_diff_check(
            lambda W: objective_Ln_weighted(data, W, kern), grad_Ln_weighted(data, V, kern), V)),
    ]


def gradcheck_instances(seed, count=10, constant_response=False, threads=1):
    """Yield ``(instance, name, discrepancy)`` over ``count`` seeded instances."""
    results = ordered_map(lambda i: gradcheck_instance(seed, i, constant_response),
                   list(range(count)), threads)
    for i, pairs in enumerate(results):
        for name, disc in pairs:
            yield i, name, disc


def cmd_gradcheck(args):
    worst = {}
    for _, name, disc in gradcheck_instances(args.seed, args.instances, args.constant_response, args.threads):
        worst[name] = max(worst.get(name, 0.0), disc)
    ok = True
    for name, disc in worst.items():
        flag = "ok" if disc <= GRADCHECK_TOL else "FAIL"
        ok &= disc <= GRADCHECK_TOL
        print(f"{name:<18} max rel. discrepancy {disc:.3e}  {flag}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_bandwidth(args):
    data, _ = load_data(args)
    q = data.p - args.dim
    if not 1 <= args.dim < data.p:
        raise InputError(f"invalid dimension --dim {args.dim}: need 1 <= k < p = {data.p}")
    print(f"n {data.n}  p {data.p}  q {q}")
    print(f"tr(Sigma)/p      {fmt(isotropic_variance(data.X))}")
    print(f"rule of thumb h  {fmt(bandwidth_rot(data.n, data.p, q, data.X))}")
    for nobs in args.nobs or []:
        print(f"nObs={nobs:<10g} h  {fmt(bandwidth_nobs(data.n, data.p, q, data.X, nobs))}")
    return EXIT_OK


def _optim_flags(p, starts=10):
    p.add_argument("--starts", type=int, default=starts, help="random starts per fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--maxit", type=int, default=50)
    p.add_argument("--threads", type=int, default=threads_default())
    p.add_argument("--bandwidth", type=parse_bandwidth, default=BandwidthRule(),
                   help="rot | nobs=<x> | fixed=<h>")


def _data_flags(p):
    p.add_argument("input", help="CSV with a header row")
    p.add_argument("--response", required=True, help="name of the response column")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)


def build_parser():
    ap = argparse.ArgumentParser(prog="cve", description="Conditional variance estimation.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate the reduction for a given dimension")
    _data_flags(p)
    p.add_argument("--dim", type=int, required=True, help="reduction dimension k")
    p.add_argument("--variant", choices=VARIANTS, default="cve")
    p.add_argument("--out", default="result.json")
    _optim_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dim", help="cross-validated dimension selection")
    _data_flags(p)
    p.add_argument("--lmax", type=int, default=None, help="largest candidate (default min(p, 10))")
    p.add_argument("--variant", choices=VARIANTS, default="cve")
    p.add_argument("--out", default="dim_out")
    _optim_flags(p)
    p.set_defaults(func=cmd_dim)

    p = sub.add_parser("simulate", help="simulation study over models M1-M7")
    p.add_argument("--model", required=True, help="comma separated model ids")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--n", type=int, default=None, help="sample size (default per model)")
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--variants", default="cve", help="comma list of cve,wcve,rcve,random")
    p.add_argument("--pmix", type=float, default=0.3)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--error-params", choices=("text", "table"), default="text")
    p.add_argument("--dimension", action="store_true", help="also run dimension selection")
    p.add_argument("--lmax", type=int, default=None)
    p.add_argument("--out", default="sim_out")
    _optim_flags(p, starts=5)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-theta", help="toy objective over V(theta) for plotting")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--threads", type=int, default=threads_default())
    p.set_defaults(func=cmd_sweep_theta)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--constant-response", action="store_true")
    p.add_argument("--threads", type=int, default=threads_default())
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bandwidth", help="print the bandwidths the rules resolve to")
    _data_flags(p)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--nobs", type=float, action="append")
    p.set_defaults(func=cmd_bandwidth)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, InvalidArgumentError, InvalidDimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CVEError, DegenerateSliceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
