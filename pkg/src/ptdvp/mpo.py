"""Matrix product operators for the long-range spin-chain benchmarks.

MPO tensors have shape ``(m_left, d, d, m_right)`` with ``W[a, s, t, b]`` the
matrix element ``<s| . |t>`` of the operator carried from channel ``a`` to
channel ``b``.  Hamiltonians use the usual upper-triangular automaton:
channel 0 is "nothing placed yet", the last channel is "term complete", and
each (interaction term, exponential) pair gets one decaying channel between
them.  A term ``A_i B_j`` with ``i < j`` picks up ``c_k x_k**(j-i-1)`` on its
way through channel ``k``, so ``m = n_H * n_exps + 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .fitting import ExpSumFit
from .mps import InvCanonicalMps, left_tensor

DENSE_CAP = 2**14

# |0> is the sigma^z = -1 state, |1> the +1 state
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SZ = np.array([[-1, 0], [0, 1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
UP = np.array([0, 1], dtype=complex)
DOWN = np.array([1, 0], dtype=complex)


class Model(str, Enum):
    ISING_LR = "IsingLR"
    XY_LR = "XYLR"
    XXX_LR = "XXXLR"
    ISING_NN = "IsingNN"


# (prefactor, [(A, B), ...]) per model: H = prefactor * sum_{i<j} J(j-i) sum A_i B_j
_TERMS = {
    Model.ISING_LR: (-1.0, [(SZ, SZ)]),
    Model.ISING_NN: (-1.0, [(SZ, SZ)]),
    Model.XY_LR: (0.5, [(SX, SX), (SY, SY)]),
    Model.XXX_LR: (0.25, [(SX, SX), (SY, SY), (SZ, SZ)]),
}


@dataclass(frozen=True)
class ModelSpec:
    """Benchmark Hamiltonian.

    ``field_B`` is the transverse field of the Ising models; ``delta_B`` the
    small sigma^x field that splits the XY ground-state degeneracy on odd
    chains (ground-state searches only).
    """

    model: Model
    n_sites: int
    alpha: float = math.inf
    field_B: float = 0.0
    delta_B: float = 0.0
    n_exps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.model is Model.ISING_NN:
            object.__setattr__(self, "alpha", math.inf)
        elif not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("long-range models need a finite alpha > 0")
        elif self.n_exps < 1:
            raise ValueError("long-range models need n_exps >= 1")

    @property
    def n_terms(self) -> int:
        return len(_TERMS[self.model][1])

    @property
    def prefactor(self) -> float:
        return _TERMS[self.model][0]

    @property
    def long_range(self) -> bool:
        return self.model is not Model.ISING_NN

    def without_perturbation(self) -> "ModelSpec":
        return replace(self, delta_B=0.0)

    def onsite(self) -> np.ndarray:
        h = np.zeros((2, 2), dtype=complex)
        if self.model in (Model.ISING_LR, Model.ISING_NN):
            h -= self.field_B * SX
        if self.delta_B:
            h += 0.5 * self.delta_B * SX
        return h


@dataclass
class Mpo:
    tensors: list[np.ndarray]

    def __post_init__(self):
        if not self.tensors:
            raise ValueError("empty MPO")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise ValueError("boundary MPO bonds must be 1")
        for j in range(len(self.tensors) - 1):
            if self.tensors[j].shape[3] != self.tensors[j + 1].shape[0]:
                raise ValueError(f"MPO bond {j} is inconsistent")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def phys_dims(self) -> list[int]:
        return [w.shape[1] for w in self.tensors]

    @property
    def bond_dim(self) -> int:
        return max(w.shape[3] for w in self.tensors[:-1]) if self.n_sites > 1 else 1


def mpo_bond_dimension(spec: ModelSpec) -> int:
    if not spec.long_range:
        return 3
    return spec.n_terms * spec.n_exps + 2


def build_mpo(spec: ModelSpec, fit: ExpSumFit | None = None) -> Mpo:
    if spec.long_range:
        if fit is None:
            raise ValueError(f"{spec.model.value} needs an exponential fit")
        if fit.n_exps != spec.n_exps:
            raise ValueError(f"fit has {fit.n_exps} exponentials, spec asks for {spec.n_exps}")
        coeffs, rates = fit.coefficients, fit.rates
    else:
        coeffs, rates = np.ones(1), np.zeros(1)
    pref, pairs = _TERMS[spec.model]
    n_exps = rates.size
    m = len(pairs) * n_exps + 2
    last = m - 1
    w = np.zeros((m, 2, 2, m), dtype=complex)
    w[0, :, :, 0] = ID2
    w[last, :, :, last] = ID2
    w[0, :, :, last] = spec.onsite()
    for h, (a_op, b_op) in enumerate(pairs):
        for k in range(n_exps):
            ch = 1 + h * n_exps + k
            w[0, :, :, ch] = a_op
            w[ch, :, :, ch] = rates[k] * ID2
            w[ch, :, :, last] = pref * coeffs[k] * b_op
    n = spec.n_sites
    tensors = [w[:1].copy()] + [w.copy() for _ in range(n - 2)] + [w[:, :, :, last:].copy()]
    return Mpo(tensors)


def identity_mpo(phys_dims) -> Mpo:
    return Mpo([np.eye(d, dtype=complex).reshape(1, d, d, 1) for d in phys_dims])


def zero_mpo(phys_dims) -> Mpo:
    return Mpo([np.zeros((1, d, d, 1), dtype=complex) for d in phys_dims])


def local_sum_mpo(op: np.ndarray, n_sites: int) -> Mpo:
    """``sum_j op_j`` with bond dimension 2."""
    d = op.shape[0]
    w = np.zeros((2, d, d, 2), dtype=complex)
    w[0, :, :, 0] = np.eye(d)
    w[1, :, :, 1] = np.eye(d)
    w[0, :, :, 1] = op
    if n_sites == 1:
        return Mpo([op.reshape(1, d, d, 1).astype(complex)])
    return Mpo([w[:1].copy()] + [w.copy() for _ in range(n_sites - 2)] + [w[:, :, :, 1:].copy()])


def mpo_to_dense(h: Mpo, cap: int = DENSE_CAP) -> np.ndarray:
    dim = int(np.prod(h.phys_dims, dtype=float))
    if dim > cap:
        raise ValueError(f"dense dimension {dim} exceeds cap {cap}")
    # acc[s, t, b] over the sites absorbed so far
    acc = np.ones((1, 1, 1), dtype=complex)
    for w in h.tensors:
        t = np.tensordot(acc, w, axes=([2], [0]))  # S, T, s, t, b
        ss, tt, s, t_, b = t.shape
        acc = t.transpose(0, 2, 1, 3, 4).reshape(ss * s, tt * t_, b)
    return acc[:, :, 0]


def expectation(psi: InvCanonicalMps, h: Mpo) -> complex:
    """``<psi|H|psi> / <psi|psi>`` by a single left-to-right zipper."""
    if psi.n_sites != h.n_sites or psi.phys_dims != h.phys_dims:
        raise ValueError("state and operator shapes differ")
    env = np.ones((1, 1, 1), dtype=complex)
    nrm = np.ones((1, 1), dtype=complex)
    for j in range(psi.n_sites):
        a = left_tensor(psi, j)
        env = update_env_left(env, a, h.tensors[j])
        t = np.tensordot(nrm, a, axes=([1], [0]))
        nrm = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
    return complex(env[0, 0, 0] / nrm[0, 0].real)


def update_env_left(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a left environment ``env[bra, mpo, ket]``.

    ``a`` is the already gauge-adjusted (left-orthonormal) site tensor.
    """
    t = np.tensordot(env, a, axes=([2], [0]))          # a, w, s', b'
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))      # a, b', s, w'
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 2]))  # b, b', w'
    return t.transpose(0, 2, 1)


def update_env_right(env: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a right environment ``env[bra, mpo, ket]``."""
    t = np.tensordot(b, env, axes=([2], [2]))          # a', s', b, w'
    t = np.tensordot(t, w, axes=([1, 3], [2, 3]))      # a', b, w, s
    t = np.tensordot(b.conj(), t, axes=([1, 2], [3, 1]))  # a, a', w
    return t.transpose(0, 2, 1)
