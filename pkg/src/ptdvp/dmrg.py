"""Two-site DMRG on the same environment and splitting machinery as TDVP."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .linalg import KrylovConfig, TruncationPolicy, lanczos_ground_state
from .mpo import Mpo
from .mps import BondWeights, InvCanonicalMps, orthonormalize, random_mps
from .tdvp import (UNIT_ENV, apply_h2, init_right_environments, pair_theta, split_theta,
                   update_left_environment, update_right_environment)

log = logging.getLogger(__name__)


class DmrgResult(NamedTuple):
    state: InvCanonicalMps
    energy: float
    converged: bool
    sweep_energies: list[float]
    gap: float


def dmrg_ground_state(h: Mpo, psi0: InvCanonicalMps | None = None,
                      policy: TruncationPolicy = TruncationPolicy(),
                      max_sweeps: int = 30, energy_tol: float = 1e-10,
                      krylov: KrylovConfig = KrylovConfig(), seed: int = 0,
                      local_tol: float = 1e-9) -> DmrgResult:
    """Lowest-energy MPS by left/right two-site sweeps.

    One "sweep" is a left-to-right pass followed by a right-to-left pass.
    Without ``psi0`` a random chi=8 state drawn from ``seed`` is used.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be at least 1")
    n = h.n_sites
    if n < 2:
        raise ValueError("two-site DMRG needs at least two sites")
    if psi0 is None:
        psi0 = random_mps(h.phys_dims, 8, seed=seed)
    psi, _ = orthonormalize(psi0)
    cache = init_right_environments(psi, h)
    sites, bonds = list(psi.sites), list(psi.bonds)
    left, right = {0: UNIT_ENV}, dict(cache.right)
    w_mpo = h.tensors
    energies: list[float] = []
    energy, gap = np.inf, np.inf
    all_converged = True

    def solve(j):
        nonlocal energy, gap, all_converged
        theta = pair_theta(sites[j], bonds[j], sites[j + 1])
        res = lanczos_ground_state(lambda x: apply_h2(left[j], w_mpo[j], w_mpo[j + 1],
                                                      right[j + 1], x),
                                   theta, krylov, tol=local_tol)
        all_converged &= res.converged
        energy, gap = res.value, res.gap
        psi_l, bond, psi_r, _ = split_theta(res.vector, policy)
        # keep the state normalized after truncation
        norm = np.linalg.norm(bond.lam)
        sites[j], sites[j + 1] = psi_l / norm, psi_r / norm
        bonds[j] = BondWeights(bond.lam / norm)

    converged = False
    for sweep in range(max_sweeps):
        for j in range(n - 1):
            solve(j)
            if j < n - 2:
                left[j + 1] = update_left_environment(left[j], sites[j], bonds[j], w_mpo[j])
        for j in range(n - 2, -1, -1):
            solve(j)
            if j > 0:
                right[j] = update_right_environment(right[j + 1], sites[j + 1], bonds[j],
                                                    w_mpo[j + 1])
        energies.append(energy)
        log.debug("dmrg sweep %d: E=%.14f", sweep, energy)
        if sweep > 0 and abs(energies[-2] - energies[-1]) <= energy_tol:
            converged = True
            break

    state = InvCanonicalMps(sites, bonds)
    return DmrgResult(state, float(energy), converged and all_converged, energies, float(gap))
