"""Wall time per timestep against the number of workers.

Evolves the long-range XY chain from a Neel state at several worker counts
and prints T(1)/T(p).  On a machine with fewer cores than workers the
processes time-slice and no speedup is possible.

    python3 scripts/scaling.py --sites 64 --chi 128 --steps 4 --p 1 2 4
"""

from __future__ import annotations

import argparse
import csv
import os

from ptdvp.config import RunConfig
from ptdvp.harness import run_evolve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=64)
    ap.add_argument("--alpha", type=float, default=0.75)
    ap.add_argument("--nexps", type=int, default=6)
    ap.add_argument("--chi", type=int, default=128)
    ap.add_argument("--dt", type=float, default=0.05)
    ap.add_argument("--steps", type=int, default=4)
    ap.add_argument("--p", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--transport", choices=["thread", "process"], default="process")
    ap.add_argument("--out")
    args = ap.parse_args()

    rows = []
    for p in sorted(set(args.p)):
        cfg = RunConfig.from_dict({
            "model": {"model": "XYLR", "n_sites": args.sites, "alpha": args.alpha,
                      "n_exps": args.nexps},
            "evolution": {"dt": args.dt, "n_steps": args.steps},
            "truncation": {"chi_max": args.chi},
            "initial_state": {"kind": "product", "bits": "01" * (args.sites // 2)
                              + "0" * (args.sites % 2)},
            "parallel": {"n_workers": p, "transport": args.transport},
            "observables": [],
        })
        rec = run_evolve(cfg, write=False)
        per_step = [s.wall_time for s in rec.steps]
        rows.append((p, rec.summary["wall_time"], per_step[-1], rec.summary["max_chi"]))
        print(f"p={p:3d}  total {rows[-1][1]:8.2f}s  last step {rows[-1][2]:7.2f}s  "
              f"max chi {rows[-1][3]}")
    t1 = rows[0][1]
    for p, total, _, _ in rows:
        print(f"p={p:3d}  speedup {t1 / total:5.2f}")
    print(f"{os.cpu_count()} cores visible")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "wall_time", "last_step", "max_chi", "speedup"])
            for p, total, last, chi in rows:
                w.writerow([p, total, last, chi, t1 / total])


if __name__ == "__main__":
    main()
