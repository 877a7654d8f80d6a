"""Matrix product states in the inverse canonical gauge.

A state on N sites is stored as site tensors ``Psi_j`` of shape
``(chi_left, d, chi_right)`` interleaved with diagonal inverse weights
``V_j = Lambda_j^{-1}``::

    |psi> = Psi_1 V_1 Psi_2 V_2 ... V_{N-1} Psi_N

so that ``Psi_j V_j`` is left-orthonormal and ``V_{j-1} Psi_j`` is
right-orthonormal whenever the gauge holds; every site tensor is then an
orthogonality center.  Sites are 0-based here.

Basis convention: local index 1 is the sigma^z = +1 state and index 0 the
sigma^z = -1 state.  Dense vectors use site 0 as the most significant digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import SVD_FLOOR, TruncationPolicy, truncated_svd

DENSE_CAP = 2**16


@dataclass(frozen=True)
class BondWeights:
    """Schmidt weights of one bond together with their reciprocals."""

    lam: np.ndarray
    inv: np.ndarray = field(default=None)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("bond weights must be a non-empty vector")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError("bond weights must be finite and strictly positive")
        object.__setattr__(self, "lam", lam)
        if self.inv is None:
            object.__setattr__(self, "inv", 1.0 / lam)
        else:
            object.__setattr__(self, "inv", np.asarray(self.inv, dtype=float))

    @classmethod
    def from_singular_values(cls, s: np.ndarray) -> "BondWeights":
        s = np.asarray(s, dtype=float)
        # values this small were already dropped by the SVD floor
        floor = SVD_FLOOR * s[0] if s.size else 0.0
        return cls(np.maximum(s, floor))

    @property
    def dim(self) -> int:
        return self.lam.size


@dataclass(frozen=True)
class ProductStateSpec:
    local_states: Sequence[np.ndarray]

    def __post_init__(self):
        if len(self.local_states) == 0:
            raise ValueError("need at least one site")
        states = []
        for j, v in enumerate(self.local_states):
            v = np.asarray(v, dtype=complex).ravel()
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError(f"local state {j} is not normalized")
            states.append(v)
        object.__setattr__(self, "local_states", tuple(states))


@dataclass
class InvCanonicalMps:
    sites: list[np.ndarray]
    bonds: list[BondWeights]

    def __post_init__(self):
        n = len(self.sites)
        if n == 0:
            raise ValueError("empty MPS")
        if len(self.bonds) != n - 1:
            raise ValueError(f"{n} sites need {n - 1} bonds, got {len(self.bonds)}")
        for j, s in enumerate(self.sites):
            if s.ndim != 3 or min(s.shape) < 1:
                raise ValueError(f"site {j} must be a rank-3 tensor with positive dims")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for j, b in enumerate(self.bonds):
            if not (self.sites[j].shape[2] == b.dim == self.sites[j + 1].shape[0]):
                raise ValueError(f"bond {j} dimensions are inconsistent")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def phys_dims(self) -> list[int]:
        return [s.shape[1] for s in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        return [b.dim for b in self.bonds]

    def copy(self) -> "InvCanonicalMps":
        return InvCanonicalMps(list(self.sites), list(self.bonds))


def left_tensor(psi: InvCanonicalMps, j: int) -> np.ndarray:
    """``Psi_j V_j``; the left-orthonormal tensor seen by environments to the right."""
    s = psi.sites[j]
    if j == psi.n_sites - 1:
        return s
    return s * psi.bonds[j].inv[None, None, :]


def right_tensor(psi: InvCanonicalMps, j: int) -> np.ndarray:
    """``V_{j-1} Psi_j``; the right-orthonormal tensor."""
    s = psi.sites[j]
    if j == 0:
        return s
    return psi.bonds[j - 1].inv[:, None, None] * s


def from_product_state(spec: ProductStateSpec) -> InvCanonicalMps:
    sites = [v.reshape(1, -1, 1).copy() for v in spec.local_states]
    bonds = [BondWeights(np.ones(1)) for _ in range(len(sites) - 1)]
    return InvCanonicalMps(sites, bonds)


def basis_state(bits: Sequence[int], d: int = 2) -> InvCanonicalMps:
    """Product of computational basis states, e.g. ``[1, 1, 1]`` for all spins up."""
    vecs = []
    for b in bits:
        v = np.zeros(d, dtype=complex)
        v[b] = 1.0
        vecs.append(v)
    return from_product_state(ProductStateSpec(vecs))


def from_dense(vec: np.ndarray, phys_dims: Sequence[int],
               policy: TruncationPolicy | None = None) -> InvCanonicalMps:
    """Exact (or truncated) inverse canonical MPS of a dense vector.

    Built by a right-to-left SVD sweep so that ``V_{j-1} Psi_j`` are the right
    isometries and ``Psi_j = Lambda_{j-1} B_j``.  The norm of ``vec`` is kept.
    """
    if policy is None:
        policy = TruncationPolicy(chi_max=10**9, w_max=0.0, epsilon=0.0)
    phys_dims = list(phys_dims)
    vec = np.asarray(vec, dtype=complex)
    if vec.size != int(np.prod(phys_dims)):
        raise ValueError("vector size does not match physical dimensions")
    n = len(phys_dims)
    rest = vec.reshape(-1, 1)  # (prefix, chi_right)
    rights: list[np.ndarray] = [None] * n
    lams: list[np.ndarray] = [None] * (n - 1)
    for j in range(n - 1, 0, -1):
        chi_r = rest.shape[1]
        mat = rest.reshape(-1, phys_dims[j] * chi_r)
        res = truncated_svd(mat, policy)
        rights[j] = res.right_isometry.reshape(res.kept_rank, phys_dims[j], chi_r)
        lams[j - 1] = res.weights
        rest = res.left_isometry * res.weights[None, :]
    sites = [rest.reshape(1, phys_dims[0], -1)]
    for j in range(1, n):
        sites.append(lams[j - 1][:, None, None] * rights[j])
    bonds = [BondWeights.from_singular_values(lam) for lam in lams]
    return InvCanonicalMps(sites, bonds)


def random_mps(phys_dims: Sequence[int], chi: int, seed=None,
               canonical: bool = True) -> InvCanonicalMps:
    """Random state with bond dimensions capped at ``chi``.

    With ``canonical=False`` the site tensors and bond weights are arbitrary
    random numbers, which is handy for checking contractions that must not
    rely on the gauge.
    """
    rng = np.random.default_rng(seed)
    phys_dims = list(phys_dims)
    n = len(phys_dims)
    dims = [1]
    for j in range(1, n):
        left = int(np.prod(phys_dims[:j], dtype=float)) if j < 40 else chi
        right = int(np.prod(phys_dims[j:], dtype=float)) if n - j < 40 else chi
        dims.append(min(chi, left, right))
    dims.append(1)
    sites = [rng.normal(size=(dims[j], phys_dims[j], dims[j + 1]))
             + 1j * rng.normal(size=(dims[j], phys_dims[j], dims[j + 1])) for j in range(n)]
    bonds = [BondWeights(rng.uniform(0.5, 1.5, size=dims[j + 1])) for j in range(n - 1)]
    psi = InvCanonicalMps(sites, bonds)
    if canonical:
        psi, _ = orthonormalize(psi, TruncationPolicy(chi_max=chi, w_max=0.0, epsilon=0.0))
    return psi


def to_dense(psi: InvCanonicalMps, cap: int = DENSE_CAP) -> np.ndarray:
    dim = int(np.prod(psi.phys_dims, dtype=float))
    if dim > cap:
        raise ValueError(f"dense dimension {dim} exceeds cap {cap}")
    out = np.ones((1, 1), dtype=complex)
    for j in range(psi.n_sites):
        a = left_tensor(psi, j)
        out = np.tensordot(out, a, axes=([1], [0])).reshape(-1, a.shape[2])
    return out.ravel()


def _transfer_left(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    # env[a, a'] -> sum conj(bra[a, s, b]) env[a, a'] ket[a', s, b']
    t = np.tensordot(env, ket, axes=([1], [0]))
    return np.tensordot(bra.conj(), t, axes=([0, 1], [0, 1]))


def _transfer_right(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    t = np.tensordot(ket, env, axes=([2], [1]))
    return np.tensordot(t, bra.conj(), axes=([1, 2], [1, 2])).T


def _check_compatible(a: InvCanonicalMps, b: InvCanonicalMps):
    if a.n_sites != b.n_sites or a.phys_dims != b.phys_dims:
        raise ValueError("states live on different chains")


def overlap(a: InvCanonicalMps, b: InvCanonicalMps) -> complex:
    """``<a|b>`` by a left-to-right zipper."""
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=complex)
    for j in range(a.n_sites):
        env = _transfer_left(env, left_tensor(a, j), left_tensor(b, j))
    return complex(env[0, 0])


def total_norm(psi: InvCanonicalMps) -> float:
    return float(np.sqrt(max(overlap(psi, psi).real, 0.0)))


def norm_error(psi: InvCanonicalMps) -> float:
    """``|1 - sqrt(<psi|psi>)|``, the norm drift monitored during evolution."""
    return abs(1.0 - total_norm(psi))


def infidelity(a: InvCanonicalMps, b: InvCanonicalMps) -> float:
    na = overlap(a, a).real
    nb = overlap(b, b).real
    if na <= 0 or nb <= 0:
        raise ValueError("infidelity undefined for a zero-norm state")
    val = 1.0 - abs(overlap(a, b)) / np.sqrt(na * nb)
    return float(min(max(val, 0.0), 1.0))


def max_bond(psi: InvCanonicalMps) -> int:
    return max([1] + psi.bond_dims)


def scale(psi: InvCanonicalMps, factor: complex) -> InvCanonicalMps:
    out = psi.copy()
    out.sites[0] = out.sites[0] * factor
    return out


def apply_local(psi: InvCanonicalMps, op: np.ndarray, site: int) -> InvCanonicalMps:
    """``O_site |psi>``; a unitary ``op`` keeps the gauge intact."""
    _check_site(psi, site)
    op = np.asarray(op)
    if op.shape != (psi.phys_dims[site],) * 2:
        raise ValueError("operator does not match local dimension")
    out = psi.copy()
    out.sites[site] = np.einsum("st,atb->asb", op, psi.sites[site])
    return out


def _check_site(psi: InvCanonicalMps, site: int):
    if not 0 <= site < psi.n_sites:
        raise IndexError(f"site {site} out of range for {psi.n_sites} sites")


def matrix_element(bra: InvCanonicalMps, ops: dict[int, np.ndarray],
                   ket: InvCanonicalMps) -> complex:
    """``<bra| prod_j O_j |ket>`` for a product of single-site operators."""
    _check_compatible(bra, ket)
    env = np.ones((1, 1), dtype=complex)
    for j in range(bra.n_sites):
        k = left_tensor(ket, j)
        if j in ops:
            k = np.einsum("st,atb->asb", ops[j], k)
        env = _transfer_left(env, left_tensor(bra, j), k)
    return complex(env[0, 0])


def local_matrix_elements(bra: InvCanonicalMps, op: np.ndarray,
                          ket: InvCanonicalMps) -> np.ndarray:
    """``<bra|O_r|ket>`` for every site r in one pass (O(N chi^3))."""
    _check_compatible(bra, ket)
    n = bra.n_sites
    lefts = [np.ones((1, 1), dtype=complex)]
    for j in range(n - 1):
        lefts.append(_transfer_left(lefts[-1], left_tensor(bra, j), left_tensor(ket, j)))
    out = np.empty(n, dtype=complex)
    right = np.ones((1, 1), dtype=complex)
    for j in range(n - 1, -1, -1):
        b = left_tensor(bra, j)
        k = np.einsum("st,atb->asb", op, left_tensor(ket, j))
        env = _transfer_left(lefts[j], b, k)
        out[j] = np.sum(env * right)
        right = _transfer_right(right, b, left_tensor(ket, j))
    return out


def expect_local(psi: InvCanonicalMps, op: np.ndarray, site: int,
                 canonical: bool = False) -> complex:
    """``<psi|O_site|psi> / <psi|psi>``.

    With ``canonical=True`` only the site tensor is touched, which is exact
    when the gauge holds (e.g. right after :func:`orthonormalize`).  States
    coming out of a TDVP sweep satisfy the gauge only approximately, so the
    default contracts the whole chain.
    """
    _check_site(psi, site)
    op = np.asarray(op)
    if op.shape != (psi.phys_dims[site],) * 2:
        raise ValueError("operator does not match local dimension")
    if canonical:
        s = psi.sites[site]
        num = np.vdot(s, np.einsum("st,atb->asb", op, s))
        return complex(num / np.vdot(s, s).real)
    return matrix_element(psi, {site: op}, psi) / overlap(psi, psi).real


def expect_local_all(psi: InvCanonicalMps, op: np.ndarray) -> np.ndarray:
    return local_matrix_elements(psi, op, psi) / overlap(psi, psi).real


def expect_two_point(psi: InvCanonicalMps, op_a: np.ndarray, site_a: int,
                     op_b: np.ndarray, site_b: int) -> complex:
    """``<psi|O_A O_B|psi> / <psi|psi>`` for two distinct sites."""
    _check_site(psi, site_a)
    _check_site(psi, site_b)
    if site_a == site_b:
        raise ValueError("two-point function needs distinct sites")
    return matrix_element(psi, {site_a: op_a, site_b: op_b}, psi) / overlap(psi, psi).real


def orthonormalize(psi: InvCanonicalMps,
                   policy: TruncationPolicy | None = None) -> tuple[InvCanonicalMps, float]:
    """Restore the inverse canonical gauge and unit norm.

    A QR sweep left to right makes every tensor left-orthonormal; the
    following right-to-left SVD sweep truncates each bond under ``policy``
    and yields the Schmidt weights.  Returns the new state and the summed
    discarded weight (relative to the normalized state).
    """
    if policy is None:
        policy = TruncationPolicy(chi_max=10**9, w_max=0.0, epsilon=0.0)
    n = psi.n_sites
    carry = np.ones((1, 1), dtype=complex)
    lefts = []
    for j in range(n):
        m = np.tensordot(carry, left_tensor(psi, j), axes=([1], [0]))
        cl, d, cr = m.shape
        if j == n - 1:
            lefts.append(m)
            break
        q, r = np.linalg.qr(m.reshape(cl * d, cr))
        lefts.append(q.reshape(cl, d, -1))
        carry = r
    nrm = np.linalg.norm(lefts[-1])
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("cannot orthonormalize a zero-norm state")
    center = lefts[-1] / nrm

    discarded = 0.0
    rights: list[np.ndarray] = [None] * n
    lams: list[np.ndarray] = [None] * (n - 1)
    for j in range(n - 1, 0, -1):
        cl, d, cr = center.shape
        res = truncated_svd(center.reshape(cl, d * cr), policy)
        discarded += res.discarded_weight
        s = res.weights / np.linalg.norm(res.weights)
        rights[j] = res.right_isometry.reshape(res.kept_rank, d, cr)
        lams[j - 1] = s
        center = np.tensordot(lefts[j - 1], res.left_isometry * s[None, :], axes=([2], [0]))
    sites = [center]
    for j in range(1, n):
        sites.append(lams[j - 1][:, None, None] * rights[j])
    bonds = [BondWeights.from_singular_values(lam) for lam in lams]
    return InvCanonicalMps(sites, bonds), float(discarded)


def gauge_violation(psi: InvCanonicalMps) -> float:
    """Largest ``| <psi|psi> - |Psi_j|^2 |`` over sites (zero in exact gauge)."""
    nrm = overlap(psi, psi).real
    return max(abs(nrm - float(np.vdot(s, s).real)) for s in psi.sites)
