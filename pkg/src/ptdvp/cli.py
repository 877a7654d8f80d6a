"""Command line entry point (``ptdvp``)."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, NumericalError, RunConfig
from .fitting import fit_exponentials

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config)
    updates: dict = {}
    if getattr(args, "output_dir", None):
        updates["output_dir"] = args.output_dir
    ev = {k: v for k, v in (("dt", getattr(args, "dt", None)),
                            ("n_steps", getattr(args, "steps", None))) if v is not None}
    if ev:
        updates["evolution"] = ev
    if getattr(args, "workers", None) is not None:
        updates["parallel"] = {"n_workers": args.workers}
    return cfg.with_updates(**updates) if updates else cfg


def cmd_evolve(args) -> int:
    from .harness import run_evolve
    cfg = _load_config(args)
    rec = run_evolve(cfg)
    s = rec.summary
    print(f"t={s['t_final']:.6g}  w_total={s['w_total']:.3e}  max_chi={s['max_chi']}  "
          f"norm_error={s['final_norm_error']:.2e}  wall={s['wall_time']:.2f}s")
    if cfg.output_dir:
        print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .harness import run_compare
    cfg = _load_config(args)
    rows = run_compare(cfg, args.p)
    print(f"{'p':>4} {'infidelity':>12} {'max_obs_dev':>12} {'w_total':>12} "
          f"{'wall[s]':>9} {'speedup':>8}")
    for r in rows:
        print(f"{r.n_workers:>4} {r.infidelity:12.3e} {r.max_observable_deviation:12.3e} "
              f"{r.w_total:12.3e} {r.wall_time:9.2f} {r.speedup:8.2f}")
    return EXIT_OK


def cmd_groundstate(args) -> int:
    from .harness import run_groundstate
    cfg = _load_config(args)
    res = run_groundstate(cfg)
    print(f"E0={res.energy:.12f}  E0/N={res.energy_per_site:.12f}  "
          f"sweeps={len(res.sweep_energies)}  converged={res.converged}")
    if res.path:
        print(f"state written to {res.path}")
    if not res.converged:
        print("DMRG did not reach the energy tolerance", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_fit_exps(args) -> int:
    if not args.alpha > 0:
        raise ConfigError("--alpha must be positive")
    if not 1 <= args.nexps <= args.range:
        raise ConfigError("need 1 <= --nexps <= --range")
    fit = fit_exponentials(args.alpha, args.range, args.nexps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    r = np.arange(1, args.range + 1)
    approx = fit(r)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "target", "approx", "abs_err", "rel_err"])
        for ri, tgt, ap in zip(r, fit.target, approx):
            err = float(abs(ap - tgt))
            w.writerow([int(ri), float(tgt), float(ap), err, err / float(tgt)])
    params = {"alpha": args.alpha, "fit_range": [1, args.range], "n_exps": fit.n_exps,
              "coefficients": fit.coefficients.tolist(), "rates": fit.rates.tolist(),
              "max_abs_error": fit.max_abs_error, "max_rel_error": fit.max_rel_error,
              "converged": fit.converged}
    out.with_suffix(".json").write_text(json.dumps(params, indent=2) + "\n")
    print(f"max_abs_error={fit.max_abs_error:.3e}  max_rel_error={fit.max_rel_error:.3e}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import QuadratureConfig, haldane_shastry_c_infinity
    try:
        quad = QuadratureConfig(args.scheme, args.tol, args.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "re", "im"])
        for x in args.x:
            for t in args.t:
                c = haldane_shastry_c_infinity(x, t, quad)
                w.writerow([x, t, float(c.real), float(c.imag)])
    print(f"{len(args.x) * len(args.t)} values written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptdvp", description="Serial and parallel 2TDVP for "
                                "long-range spin chains.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--output-dir")
        return sp

    ev = with_config(sub.add_parser("evolve", help="time-evolve one configuration"))
    ev.add_argument("--dt", type=float)
    ev.add_argument("--steps", type=int)
    ev.add_argument("--workers", type=int, help="number of partitions (1 = serial)")
    ev.set_defaults(func=cmd_evolve)

    cp = with_config(sub.add_parser("compare", help="run at several worker counts"))
    cp.add_argument("--p", type=int, nargs="+", default=[1, 2, 4])
    cp.add_argument("--dt", type=float)
    cp.add_argument("--steps", type=int)
    cp.set_defaults(func=cmd_compare)

    gs = with_config(sub.add_parser("groundstate", help="two-site DMRG ground state"))
    gs.set_defaults(func=cmd_groundstate)

    fe = sub.add_parser("fit-exps", help="fit r^-alpha by a sum of exponentials")
    fe.add_argument("--alpha", type=float, required=True)
    fe.add_argument("--range", type=int, required=True, help="fit on r = 1..RANGE")
    fe.add_argument("--nexps", type=int, required=True)
    fe.add_argument("--out", required=True, help="CSV path; parameters go to the .json sibling")
    fe.set_defaults(func=cmd_fit_exps)

    oc = sub.add_parser("oracle", help="thermodynamic-limit 1/r^2 correlator on a grid")
    oc.add_argument("--x", type=int, nargs="+", required=True)
    oc.add_argument("--t", type=float, nargs="+", required=True)
    oc.add_argument("--scheme", choices=["adaptive", "gauss_legendre"], default="adaptive")
    oc.add_argument("--tol", type=float, default=1e-9)
    oc.add_argument("--order", type=int, default=64)
    oc.add_argument("--out", required=True)
    oc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
