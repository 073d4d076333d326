"""Command-line front end: experiment suites, geometry tables, spectral and
kernel caches.

Exit codes: 0 all checks pass, 1 any check fails, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

import numpy as np

from .sympoly import RealWPoly
from .crfield import DecoupledSurface
from .geometry import (PointM, Lambda, mu, dist_szego, dist_sigma,
                       vol_szego, vol_sigma, ball_inclusion_check)
from . import spectral as sx
from . import kernels as kx
from . import harness as hx


VERIFY_SUITES = ("symbolic", "geometry", "spectral", "kernels", "estimates",
                 "holder", "l1", "optimality", "weighted")


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise hx.ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise hx.ConfigError(f"bad TOML in {path}: {e}")
    for key in cfg:
        if key not in ("surface", "grid", "tau", "tolerances", "samples"):
            raise hx.ConfigError(f"unknown config section [{key}]")
    return cfg


def surface_from_config(cfg: dict) -> DecoupledSurface:
    sec = cfg.get("surface", {})
    degrees = sec.get("degrees", [2, 4])
    if (not isinstance(degrees, list) or not degrees
            or any((not isinstance(m, int)) or m < 2 or m % 2
                   for m in degrees)):
        raise hx.ConfigError(
            "surface.degrees must be a list of even integers >= 2")
    return DecoupledSurface([RealWPoly.abs_pow(m) for m in degrees])


def _parse_point(text: str, n: int) -> PointM:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 2 * n + 1:
        raise hx.ConfigError(
            f"point needs {2 * n + 1} floats (re,im per factor, then t)")
    z = tuple(complex(parts[2 * j], parts[2 * j + 1]) for j in range(n))
    return PointM(z, parts[-1])


def cmd_verify(args) -> int:
    cfg = load_config(args.surface)
    S = surface_from_config(cfg)
    samples = cfg.get("samples", {})
    grid = cfg.get("grid", {})
    tau = cfg.get("tau", {})
    seed = args.seed if args.seed is not None else samples.get("seed", 0)
    h = hx.config_hash({"cfg": cfg, "suite": args.suite, "seed": seed,
                        "refine": args.refine})
    suite = args.suite
    if suite == "symbolic":
        reps = [hx.suite_symbolic(S, seed=seed, cfg_hash=h)]
    elif suite == "geometry":
        reps = [hx.suite_geometry(S, seed=seed,
                                  n_samples=samples.get("n_samples", 500),
                                  cfg_hash=h)]
    elif suite == "spectral":
        reps = [hx.suite_spectral(S, N=grid.get("N", 48), cfg_hash=h)]
    elif suite == "kernels":
        reps = [hx.suite_kernels(cfg_hash=h)]
    elif suite == "estimates":
        reps = [hx.suite_estimates(S, n_samples=samples.get("n_samples", 1000),
                                   seed=seed, refine=args.refine, cfg_hash=h)]
    elif suite == "holder":
        reps = [hx.suite_holder(S, n_q=samples.get("n_q", 4000), seed=seed,
                                cfg_hash=h),
                hx.holder_m2_control(n_q=samples.get("n_q", 4000), seed=seed,
                                     cfg_hash=h)]
    elif suite == "l1":
        reps = [hx.suite_l1_modulus(S, n_q=samples.get("n_q", 2500),
                                    seed=seed, cfg_hash=h)]
    elif suite == "optimality":
        reps = [hx.suite_optimality(S, seed=seed, cfg_hash=h)]
    elif suite == "weighted":
        tl = tau.get("slices", [0.125, 1.0, 4.0])
        reps = [hx.suite_weighted_lp(S, tau_list=tuple(tl), cfg_hash=h)]
    else:                                            # pragma: no cover
        raise hx.ConfigError(f"unknown suite {suite}")
    rc = hx.report(args.out, reps)
    if suite == "symbolic":
        # per-identity verdicts with a witness slot for failures
        out = [{"identity": c.id, "status": c.status,
                "witness": "" if c.status == "PASS" else repr(c.measured)}
               for c in reps[0].cases]
        with open(os.path.join(args.out, "symbolic.json"), "w") as fh:
            json.dump(out, fh, indent=2)
    return rc


def cmd_geometry(args) -> int:
    cfg = load_config(args.surface)
    S = surface_from_config(cfg)
    rows = []
    deltas = args.delta or [0.5]
    if args.op in ("lambda", "mu"):
        j = args.factor
        if not 1 <= j <= S.n:
            raise hx.ConfigError(f"factor must be in 1..{S.n}")
        zparts = [float(x) for x in (args.p or "0,0").split(",")]
        if len(zparts) != 2:
            raise hx.ConfigError("--p for factor ops is 're,im'")
        p = complex(*zparts)
        fn = Lambda if args.op == "lambda" else mu
        for d in deltas:
            rows.append([j, p.real, p.imag, d, fn(S, j, p, d)])
        header = ["j", "p_re", "p_im", "delta", "value"]
    elif args.op in ("dS", "dSigma"):
        p = _parse_point(args.p or "0," * 2 * S.n + "0", S.n)
        q = _parse_point(args.q or "0," * 2 * S.n + "0", S.n)
        fn = dist_szego if args.op == "dS" else dist_sigma
        rows.append(list(args.p.split(",")) + list(args.q.split(","))
                    + [fn(S, p, q)])
        header = [f"p{i}" for i in range(2 * S.n + 1)] \
            + [f"q{i}" for i in range(2 * S.n + 1)] + ["value"]
    elif args.op == "vol":
        p = _parse_point(args.p or "0," * 2 * S.n + "0", S.n)
        for d in deltas:
            rows.append(list(args.p.split(",")) + [d, vol_szego(S, p, d),
                                                   vol_sigma(S, p, d)])
        header = [f"p{i}" for i in range(2 * S.n + 1)] \
            + ["delta", "vol_szego", "vol_sigma"]
    elif args.op == "inclusion":
        p = _parse_point(args.p or "0," * 2 * S.n + "0", S.n)
        for d in deltas:
            rep = ball_inclusion_check(S, p, d, n_samples=args.n_samples,
                                       seed=args.seed or 0)
            rows.append([d, rep["violations"], rep["tightest_lower"],
                         rep["tightest_upper"], rep["slack"]])
        header = ["delta", "violations", "tightest_lower", "tightest_upper",
                  "slack"]
    else:                                            # pragma: no cover
        raise hx.ConfigError(f"unknown op {args.op}")
    _write_csv(args.out, header, rows)
    return 0


def _write_csv(out, header, rows):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    finally:
        if out:
            fh.close()


def cmd_surface_eig(args) -> int:
    cfg = load_config(args.surface)
    S = surface_from_config(cfg)
    if not 1 <= args.factor <= S.n:
        raise hx.ConfigError(f"factor must be in 1..{S.n}")
    try:
        n_txt, l_txt = args.grid.split(",")
        g = sx.GridSpec(L=float(l_txt), N=int(n_txt))
    except ValueError as e:
        raise hx.ConfigError(f"--grid must be 'N,L': {e}")
    op = sx.build_twisted(S, args.factor, args.sign, args.tau, g)
    es = sx.eigensystem(op, k_max=args.k_max, drop_edge=True)
    rows = [[k, lam] for k, lam in enumerate(es.eigenvalues)]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "eigenvalues.csv"),
                   ["k", "eigenvalue"], rows)
        for name, sl in (("green", sx.green_slice(es)),
                         ("szego", sx.szego_slice(es))):
            sx.save_slice(os.path.join(
                args.out, f"{name}_j{args.factor}_tau{args.tau:g}.slice"), sl)
    else:
        _write_csv(None, ["k", "eigenvalue"], rows)
    return 0


def _parse_J(text: str):
    if not text:
        return ()
    try:
        return tuple(sorted(int(x) for x in text.split(",")))
    except ValueError:
        raise hx.ConfigError(f"--J must be comma-separated integers: {text}")


def cmd_kernel_build(args) -> int:
    cfg = load_config(args.surface)
    S = surface_from_config(cfg)
    J = _parse_J(args.J)
    if any(j < 1 or j > S.n for j in J):
        raise hx.ConfigError(f"J entries must be in 1..{S.n}")
    tau = cfg.get("tau", {})
    grid = cfg.get("grid", {})
    taus = sx.uniform_tau_grid(tau.get("T", 2.0), tau.get("n", 8))
    cache = kx.EigenCache(S, N=grid.get("N", 32),
                          k_max=grid.get("k_max", 16),
                          dense=True, drop_edge=True)
    fs = kx.build_factor_spectra(S, J=J, tau_grid=taus, cache=cache)
    os.makedirs(args.out, exist_ok=True)
    manifest = {"degrees": list(S.degrees), "J": list(J),
                "tau_grid": [float(t) for t in taus], "slices": []}
    for j in range(1, S.n + 1):
        for it in range(len(taus)):
            es = fs.es(j, it)
            name = f"green_j{j}_i{it}.slice"
            sx.save_slice(os.path.join(args.out, name), sx.green_slice(es))
            manifest["slices"].append(
                {"file": name, "factor": j, "tau": float(taus[it]),
                 "k": es.k, "null_count": es.null_count})
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return 0


def cmd_kernel_check(args) -> int:
    fs, cache, taus = hx._kernel_fixture()
    ident = args.identity
    if ident in ("first0", "first", "first2"):
        d = kx.decomposition_check(fs)
        res = d[f"{ident}_residual"]
        tol = 0.0 if ident == "first0" else 1e-8
        out = {"identity": ident, "residual": res, "pass": res <= tol}
    elif ident == "borrow":
        ax = fs.es(1, 5).grid.axis()
        z = (complex(ax[10], ax[12]), complex(ax[13], ax[15]))
        w = (complex(ax[20], ax[14]), complex(ax[18], ax[16]))
        pairs = [((z, (0.0, 0.0)), (w, (0.1, 0.05)))]
        r = kx.borrowing_check(fs, pairs)
        out = {"identity": ident,
               "diagonal_residual": r["diagonal_residual"],
               "hyperplane_relative": r["hyperplane_relative"],
               "pass": (r["diagonal_residual"] == 0.0
                        and r["hyperplane_relative"] < 1e-6)}
    elif ident == "mix":
        ok = True
        details = []
        for J, A in (((1,), (1, 2)), ((1,), (1,)), ((), (1,))):
            r = kx.szego_mix_vanish(cache.get, J, A, taus)
            ok = ok and r["pass"]
            details.append({"J": list(J), "A": list(A),
                            "should_vanish": r["should_vanish"],
                            "pass": r["pass"]})
        out = {"identity": ident, "cases": details, "pass": ok}
    elif ident == "transfer":
        r = kx.transference_trials(fs, n_trials=10, seed=1)
        out = {"identity": ident, "n_pass": r["n_pass"],
               "pass": r["all_pass"]}
    else:                                            # pragma: no cover
        raise hx.ConfigError(f"unknown identity {ident}")
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0 if out["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kohnlab")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=VERIFY_SUITES)
    v.add_argument("--surface", required=True, help="TOML config")
    v.add_argument("--out", required=True, help="report directory")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--refine", action="store_true")
    v.set_defaults(fn=cmd_verify)

    g = sub.add_parser("geometry", help="geometry tables (CSV)")
    g.add_argument("--surface", required=True)
    g.add_argument("--op", required=True,
                   choices=("lambda", "mu", "dS", "dSigma", "vol",
                            "inclusion"))
    g.add_argument("--factor", type=int, default=1)
    g.add_argument("--p", default=None)
    g.add_argument("--q", default=None)
    g.add_argument("--delta", type=float, action="append")
    g.add_argument("--n-samples", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, help="CSV path (default stdout)")
    g.set_defaults(fn=cmd_geometry)

    s = sub.add_parser("surface", help="per-factor spectral tools")
    ssub = s.add_subparsers(dest="surface_command", required=True)
    se = ssub.add_parser("eig", help="twisted eigenvalues (CSV)")
    se.add_argument("--surface", required=True)
    se.add_argument("--factor", type=int, required=True)
    se.add_argument("--tau", type=float, required=True)
    se.add_argument("--grid", required=True, help="N,L")
    se.add_argument("--sign", choices=("-", "+"), default="-")
    se.add_argument("--k-max", type=int, default=24)
    se.add_argument("--out", default=None,
                    help="directory for CSV + slice caches (default stdout)")
    se.set_defaults(fn=cmd_surface_eig)

    k = sub.add_parser("kernel", help="kernel caches and identity checks")
    ksub = k.add_subparsers(dest="kernel_command", required=True)
    kb = ksub.add_parser("build", help="build and cache factor slices")
    kb.add_argument("--surface", required=True)
    kb.add_argument("--J", default="", help="form component set, e.g. '2'")
    kb.add_argument("--out", required=True)
    kb.set_defaults(fn=cmd_kernel_build)
    kc = ksub.add_parser("check", help="structural kernel identities")
    kc.add_argument("--identity", required=True,
                    choices=("first0", "first", "first2", "borrow", "mix",
                             "transfer"))
    kc.set_defaults(fn=cmd_kernel_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except hx.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
