"""Reference results: exact diagonalization/evolution for small chains and the
thermodynamic-limit correlator of the 1/r^2 Heisenberg chain."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.integrate
import scipy.sparse as sp
import scipy.sparse.linalg

from .fitting import ExpSumFit
from .mpo import _TERMS, ModelSpec

DENSE_CAP = 2**14


class QuadratureWarning(UserWarning):
    pass


def couplings(spec: ModelSpec, fit: ExpSumFit | None = None) -> np.ndarray:
    """``J(r)`` for r = 1..N-1.

    With ``fit`` the exponential sum is used at every distance, including
    beyond the fit range, which is what the MPO automaton encodes.
    """
    r = np.arange(1, spec.n_sites, dtype=float)
    if not spec.long_range:
        return (r == 1).astype(float)
    if fit is not None:
        return fit(r)
    return r ** (-spec.alpha)


def _site_op(op: np.ndarray, site: int, n: int) -> sp.csr_matrix:
    left = sp.identity(2**site, dtype=complex, format="csr")
    right = sp.identity(2 ** (n - site - 1), dtype=complex, format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def sparse_hamiltonian(spec: ModelSpec, fit: ExpSumFit | None = None,
                       cap: int = 2**20) -> sp.csr_matrix:
    n = spec.n_sites
    if 2**n > cap:
        raise ValueError(f"dimension 2^{n} exceeds cap {cap}")
    if spec.long_range and fit is not None and fit.n_exps != spec.n_exps:
        raise ValueError("fit does not match spec.n_exps")
    pref, pairs = _TERMS[spec.model]
    j_r = couplings(spec, fit)
    h = sp.csr_matrix((2**n, 2**n), dtype=complex)
    onsite = spec.onsite()
    for a_op, b_op in pairs:
        ops_a = [_site_op(a_op, i, n) for i in range(n)]
        ops_b = ops_a if b_op is a_op else [_site_op(b_op, i, n) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if j_r[j - i - 1] != 0.0:
                    h = h + (pref * j_r[j - i - 1]) * (ops_a[i] @ ops_b[j])
    if np.any(onsite):
        for i in range(n):
            h = h + _site_op(onsite, i, n)
    return h.tocsr()


def dense_hamiltonian(spec: ModelSpec, fit: ExpSumFit | None = None,
                      cap: int = DENSE_CAP) -> np.ndarray:
    """Full Hamiltonian matrix; ``fit=None`` uses the exact power law."""
    if 2**spec.n_sites > cap:
        raise ValueError(f"dimension 2^{spec.n_sites} exceeds cap {cap}")
    return sparse_hamiltonian(spec, fit).toarray()


class DenseEvolver:
    """``exp(-iHt)`` from a cached eigendecomposition."""

    def __init__(self, h: np.ndarray, cap: int = DENSE_CAP):
        h = np.asarray(h)
        if h.shape[0] > cap:
            raise ValueError(f"dimension {h.shape[0]} exceeds cap {cap}")
        if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(h))):
            raise ValueError("Hamiltonian is not Hermitian")
        self.energies, self.vectors = np.linalg.eigh(h)

    def evolve(self, psi0: np.ndarray, t: float) -> np.ndarray:
        coef = self.vectors.conj().T @ psi0
        return self.vectors @ (np.exp(-1j * self.energies * t) * coef)

    def ground_state(self) -> tuple[float, np.ndarray]:
        return float(self.energies[0]), self.vectors[:, 0]


def exact_evolve(psi0: np.ndarray, h: np.ndarray, t: float) -> np.ndarray:
    return DenseEvolver(h).evolve(np.asarray(psi0, dtype=complex), t)


def dense_ground_state(h) -> tuple[float, np.ndarray]:
    """Lowest eigenpair; sparse input goes through ARPACK."""
    if sp.issparse(h) and h.shape[0] > 2048:
        vals, vecs = scipy.sparse.linalg.eigsh(h, k=1, which="SA", tol=1e-12)
        return float(vals[0]), vecs[:, 0]
    h = h.toarray() if sp.issparse(h) else h
    vals, vecs = np.linalg.eigh(h)
    return float(vals[0]), vecs[:, 0]


@dataclass(frozen=True)
class QuadratureConfig:
    scheme: Literal["adaptive", "gauss_legendre"] = "adaptive"
    tolerance: float = 1e-9
    order: int = 64
    limit: int = 200

    def __post_init__(self):
        if self.scheme not in ("adaptive", "gauss_legendre"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.order < 2:
            raise ValueError("order must be at least 2")


def _hs_phase(l1, l2, x, t):
    q = math.pi * l1 * l2
    e = 0.25 * math.pi**2 * (l1**2 + l2**2 - 2.0 * l1**2 * l2**2)
    # Q is odd and E even in each lambda, so only cos(Qx) survives on [0, 1]^2
    return np.cos(q * x), e * t


def haldane_shastry_c_infinity(x: int, t: float,
                               quad: QuadratureConfig = QuadratureConfig()) -> complex:
    """Thermodynamic-limit ``<sigma^z_x(t) sigma^z_0(0)>`` of the 1/r^2 chain.

    Folding the square onto [0, 1]^2 gives
    ``(-1)^x int int cos(Q x) exp(-i E t)``.
    """
    sign = -1.0 if int(x) % 2 else 1.0
    if quad.scheme == "gauss_legendre":
        nodes, weights = np.polynomial.legendre.leggauss(quad.order)
        nodes, weights = 0.5 * (nodes + 1.0), 0.5 * weights
        l1, l2 = np.meshgrid(nodes, nodes, indexing="ij")
        amp, phase = _hs_phase(l1, l2, x, t)
        val = weights @ (amp * np.exp(-1j * phase)) @ weights
        return complex(sign * val)

    err_total = 0.0

    def part(fn):
        nonlocal err_total

        def inner(l1):
            v, e = scipy.integrate.quad(lambda l2: fn(*_hs_phase(l1, l2, x, t)), 0.0, 1.0,
                                        epsabs=0.1 * quad.tolerance, epsrel=0.0,
                                        limit=quad.limit)
            return v

        v, e = scipy.integrate.quad(inner, 0.0, 1.0, epsabs=quad.tolerance, epsrel=0.0,
                                    limit=quad.limit)
        err_total += e
        return v

    re = part(lambda a, p: a * math.cos(p))
    im = part(lambda a, p: -a * math.sin(p))
    if err_total > 2 * quad.tolerance:
        warnings.warn(f"C_inf({x}, {t}) error estimate {err_total:.1e} above tolerance",
                      QuadratureWarning, stacklevel=2)
    return complex(sign * re, sign * im)


def relative_difference(value: complex, reference: complex) -> float:
    """``|value - reference| / |reference|``; NaN when the reference vanishes."""
    if reference == 0:
        return math.nan
    return abs(value - reference) / abs(reference)


def eta_infinity(c: complex, c_inf: complex) -> float:
    return relative_difference(c, c_inf)


def eta_p(c_par: complex, c_ser: complex) -> float:
    return relative_difference(c_par, c_ser)
