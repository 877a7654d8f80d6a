"""Regenerate tests/reference_values.json from oracles that share no code with ptdvp.

Hamiltonians are assembled by brute-force Kronecker products and the
1/r^2 correlator is integrated over the full square [-1, 1]^2 with
scipy's dblquad.  Run from the repository root:

    python3 scripts/freeze_reference_values.py
"""

from __future__ import annotations

import argparse
import json
import math
from functools import reduce
from pathlib import Path

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import eigsh

OUT = Path(__file__).resolve().parents[1] / "tests" / "reference_values.json"

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
Z = np.diag([-1.0, 1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def embed(ops: dict[int, np.ndarray], n: int):
    return reduce(lambda a, b: sparse.kron(a, b, format="csr"),
                  [sparse.csr_matrix(ops.get(i, I2)) for i in range(n)])


def ising_nn(n: int, b: float):
    h = sum(-embed({i: Z, i + 1: Z}, n) for i in range(n - 1))
    return h - b * sum(embed({i: X}, n) for i in range(n))


def xxx_power_law(n: int, alpha: float):
    h = 0
    for i in range(n):
        for j in range(i + 1, n):
            c = 0.25 * (j - i) ** (-alpha)
            h = h + c * (embed({i: X, j: X}, n) + embed({i: Y, j: Y}, n)
                         + embed({i: Z, j: Z}, n))
    return h


def c_infinity_unfolded(x: int, t: float) -> complex:
    def f(l2, l1, part):
        q = math.pi * l1 * l2
        e = 0.25 * math.pi**2 * (l1**2 + l2**2 - 2 * l1**2 * l2**2)
        ph = q * x - e * t
        return 0.25 * (math.cos(ph) if part == 0 else math.sin(ph))

    re = integrate.dblquad(f, -1, 1, -1, 1, args=(0,), epsabs=1e-11, epsrel=1e-11)[0]
    im = integrate.dblquad(f, -1, 1, -1, 1, args=(1,), epsabs=1e-11, epsrel=1e-11)[0]
    return (-1) ** x * complex(re, im)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    ref: dict = {}
    h = ising_nn(10, 0.1).toarray()
    ref["ising_nn_n10_b0.1_ground_energy"] = float(np.linalg.eigvalsh(h)[0])
    ref["ising_nn_n2_b0_spectrum"] = np.linalg.eigvalsh(ising_nn(2, 0.0).toarray()).tolist()
    e12 = eigsh(xxx_power_law(12, 2.0), k=1, which="SA")[0][0]
    ref["xxx_power_law_n12_alpha2_energy_per_site"] = float(e12) / 12
    grid = {}
    for x in (0, 1, 2, 4, 6):
        for t in (0, 1, 2, 3, 4):
            c = c_infinity_unfolded(x, float(t))
            grid[f"{x},{t}"] = [c.real, c.imag]
    ref["c_infinity"] = grid
    args.out.write_text(json.dumps(ref, indent=2) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
