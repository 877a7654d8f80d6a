"""Serial two-site TDVP in the inverse canonical gauge.

Environments are stored as ``env[bra, mpo, ket]``.  ``left[j]`` caches
everything to the left of site ``j`` (built from ``Psi_k V_k``, k < j) and
``right[j]`` everything to the right (built from ``V_{k-1} Psi_k``, k > j).
Both boundary environments are the 1x1x1 unit tensor.

One timestep sweeps left to right and back.  Each sweep evolves pairs
forward by ``dt/2`` and single sites backward by ``dt/2``; the rightmost pair
sits at the turn and is evolved once by the full ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linalg import KrylovConfig, TruncationPolicy, krylov_expm_apply, truncated_svd
from .mpo import Mpo, update_env_left, update_env_right
from .mps import BondWeights, InvCanonicalMps, left_tensor, right_tensor

UNIT_ENV = np.ones((1, 1, 1), dtype=complex)


@dataclass
class EnvCache:
    """Left/right environments keyed by the site they border."""

    left: dict[int, np.ndarray] = field(default_factory=dict)
    right: dict[int, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "EnvCache":
        return EnvCache(dict(self.left), dict(self.right))


class StepResult(NamedTuple):
    state: InvCanonicalMps
    cache: EnvCache
    discarded_weight: float
    unconverged: int


def _check_shapes(psi: InvCanonicalMps, h: Mpo):
    if psi.n_sites != h.n_sites or psi.phys_dims != h.phys_dims:
        raise ValueError("state and MPO shapes differ")


def update_left_environment(beta: np.ndarray, site: np.ndarray, v: BondWeights | None,
                            w: np.ndarray) -> np.ndarray:
    """``beta_{j+1}`` from ``beta_j``, ``Psi_j``, ``V_j`` and ``W_j``.

    ``V_j`` multiplies the right leg of the site on both the ket and bra
    layers; pass ``v=None`` for the last site.
    """
    a = site if v is None else site * v.inv[None, None, :]
    if beta.shape[0] != a.shape[0] or beta.shape[1] != w.shape[0]:
        raise ValueError("left environment does not match site/MPO tensor")
    return update_env_left(beta, a, w)


def update_right_environment(gamma: np.ndarray, site: np.ndarray, v: BondWeights | None,
                             w: np.ndarray) -> np.ndarray:
    """``gamma_{j-1}`` from ``gamma_j``, ``Psi_j``, ``V_{j-1}`` and ``W_j``."""
    b = site if v is None else v.inv[:, None, None] * site
    if gamma.shape[0] != b.shape[2] or gamma.shape[1] != w.shape[3]:
        raise ValueError("right environment does not match site/MPO tensor")
    return update_env_right(gamma, b, w)


def init_right_environments(psi: InvCanonicalMps, h: Mpo) -> EnvCache:
    _check_shapes(psi, h)
    n = psi.n_sites
    cache = EnvCache(left={0: UNIT_ENV}, right={n - 1: UNIT_ENV})
    for j in range(n - 1, 0, -1):
        cache.right[j - 1] = update_env_right(cache.right[j], right_tensor(psi, j), h.tensors[j])
    return cache


def init_left_environments(psi: InvCanonicalMps, h: Mpo,
                           cache: EnvCache | None = None) -> EnvCache:
    _check_shapes(psi, h)
    n = psi.n_sites
    cache = EnvCache(right={n - 1: UNIT_ENV}) if cache is None else cache.copy()
    cache.left[0] = UNIT_ENV
    for j in range(n - 1):
        cache.left[j + 1] = update_env_left(cache.left[j], left_tensor(psi, j), h.tensors[j])
    return cache


def init_environments(psi: InvCanonicalMps, h: Mpo) -> EnvCache:
    return init_left_environments(psi, h, init_right_environments(psi, h))


def apply_h2(beta: np.ndarray, w_l: np.ndarray, w_r: np.ndarray, gamma: np.ndarray,
             theta: np.ndarray) -> np.ndarray:
    """Two-site effective Hamiltonian applied to ``theta[a, s1, s2, b]``.

    Contraction order keeps the cost at chi^3 m d^2 + chi^2 m^2 d^3.
    """
    if theta.ndim != 4:
        raise ValueError("two-site theta must be rank 4")
    t = np.tensordot(beta, theta, axes=([2], [0]))     # a, w, s1', s2', b'
    t = np.tensordot(t, w_l, axes=([1, 2], [0, 2]))    # a, s2', b', s1, w1
    t = np.tensordot(t, w_r, axes=([4, 1], [0, 2]))    # a, b', s1, s2, w2
    t = np.tensordot(t, gamma, axes=([4, 1], [1, 2]))  # a, s1, s2, b
    return t


def apply_h1(beta: np.ndarray, w: np.ndarray, gamma: np.ndarray,
             theta: np.ndarray) -> np.ndarray:
    if theta.ndim != 3:
        raise ValueError("one-site theta must be rank 3")
    t = np.tensordot(beta, theta, axes=([2], [0]))     # a, w, s', b'
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))      # a, b', s, w'
    t = np.tensordot(t, gamma, axes=([3, 1], [1, 2]))  # a, s, b
    return t


def pair_theta(left: np.ndarray, bond: BondWeights, right: np.ndarray) -> np.ndarray:
    """``Psi_L V Psi_R`` as a rank-4 tensor."""
    return np.tensordot(left * bond.inv[None, None, :], right, axes=([2], [0]))


def split_theta(theta: np.ndarray, policy: TruncationPolicy):
    """Split an evolved two-site tensor back into ``Psi_L, V, Psi_R``.

    ``Psi_L = A Lambda`` and ``Psi_R = Lambda B`` so that
    ``Psi_L V Psi_R`` reproduces the truncated theta.  Returns
    ``(psi_l, bond, psi_r, discarded_weight)``.
    """
    chi_l, d1, d2, chi_r = theta.shape
    res = truncated_svd(theta.reshape(chi_l * d1, d2 * chi_r), policy)
    s = res.weights
    psi_l = (res.left_isometry * s[None, :]).reshape(chi_l, d1, res.kept_rank)
    psi_r = (s[:, None] * res.right_isometry).reshape(res.kept_rank, d2, chi_r)
    return psi_l, BondWeights.from_singular_values(s), psi_r, res.discarded_weight


def evolve_pair(beta, w_l, w_r, gamma, theta, tau, krylov: KrylovConfig):
    return krylov_expm_apply(lambda x: apply_h2(beta, w_l, w_r, gamma, x), theta, tau, krylov)


def evolve_site(beta, w, gamma, site, tau, krylov: KrylovConfig):
    return krylov_expm_apply(lambda x: apply_h1(beta, w, gamma, x), site, tau, krylov)


def serial_timestep(psi: InvCanonicalMps, h: Mpo, cache: EnvCache, dt: float,
                    policy: TruncationPolicy, krylov: KrylovConfig = KrylovConfig()) -> StepResult:
    """One symmetric 2TDVP step; ``cache`` must hold all right environments."""
    _check_shapes(psi, h)
    n = psi.n_sites
    if n < 2:
        raise ValueError("2TDVP needs at least two sites")
    sites = list(psi.sites)
    bonds = list(psi.bonds)
    w_mpo = h.tensors
    left = dict(cache.left)
    right = dict(cache.right)
    left[0] = UNIT_ENV
    right[n - 1] = UNIT_ENV
    forward, backward = -0.5j * dt, 0.5j * dt
    w_step = 0.0
    fails = 0

    def pair(j, tau):
        nonlocal w_step, fails
        theta = pair_theta(sites[j], bonds[j], sites[j + 1])
        res = evolve_pair(left[j], w_mpo[j], w_mpo[j + 1], right[j + 1], theta, tau, krylov)
        fails += not res.converged
        sites[j], bonds[j], sites[j + 1], w = split_theta(res.vector, policy)
        w_step += w

    def single(j):
        nonlocal fails
        res = evolve_site(left[j], w_mpo[j], right[j], sites[j], backward, krylov)
        fails += not res.converged
        sites[j] = res.vector

    for j in range(n - 1):
        if j == n - 2:
            pair(j, -1j * dt)
            break
        pair(j, forward)
        left[j + 1] = update_left_environment(left[j], sites[j], bonds[j], w_mpo[j])
        single(j + 1)

    right[n - 2] = update_right_environment(right[n - 1], sites[n - 1], bonds[n - 2], w_mpo[n - 1])
    if n > 2:
        single(n - 2)
    for j in range(n - 3, -1, -1):
        pair(j, forward)
        right[j] = update_right_environment(right[j + 1], sites[j + 1], bonds[j], w_mpo[j + 1])
        if j > 0:
            single(j)

    out = InvCanonicalMps(sites, bonds)
    return StepResult(out, EnvCache({0: UNIT_ENV}, right), w_step, fails)
