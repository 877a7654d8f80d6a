"""Per-worker sweep of one parallel 2TDVP timestep.

Worker ``k`` owns the sites ``lo..hi`` and the bond to the right of ``hi``;
it keeps a read-only copy of the bond to the left of ``lo``.  In the first
half of a step neighbouring workers sweep in opposite directions, the two
central ones moving away from the chain centre; the second half reverses
every direction.

Each shared bond is updated once per half-step by its left worker.  The
exchange is the same whether the two workers meet there at the start of
their sweeps (diverging) or at the end (converging):

    left worker                       right worker
    send EnvTransfer(beta_h)    -->   recv
    recv                        <--   send EnvTransfer(gamma_{h+1})
    recv                        <--   send SiteRequest(Psi_{h+1})
    evolve pair, split
    send UpdatedPair            -->   recv
    update gamma_h                    update beta_{h+1}

A diverging boundary is followed by a backward one-site step on both sides
because both workers continue with another pair; a converging one is not.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..linalg import KrylovConfig, TruncationPolicy
from ..mpo import Mpo
from ..mps import BondWeights
from ..tdvp import (evolve_pair, evolve_site, pair_theta, split_theta,
                    update_left_environment, update_right_environment)
from .transport import BoundaryMessage, Links, MessageKind


def sweeps_left_first(rank: int, n_workers: int) -> bool:
    """Direction of the first half-step; the two central workers point outward."""
    return (n_workers // 2 - 1 - rank) % 2 == 0


@dataclass
class WorkerState:
    rank: int
    n_workers: int
    n_sites: int
    lo: int
    hi: int
    sites: dict[int, np.ndarray]
    bonds: dict[int, BondWeights]
    left: dict[int, np.ndarray]
    right: dict[int, np.ndarray]

    @property
    def is_first(self) -> bool:
        return self.rank == 0

    @property
    def is_last(self) -> bool:
        return self.rank == self.n_workers - 1

    @property
    def sweeps_left_first(self) -> bool:
        return sweeps_left_first(self.rank, self.n_workers)

    @property
    def fuses_turn(self) -> bool:
        """True when the first half ends on a chain end, so that pair gets one full step."""
        return (self.is_first and self.sweeps_left_first) or \
            (self.is_last and not self.sweeps_left_first)


@dataclass
class WorkerReport:
    rank: int
    discarded_weight: float
    unconverged: int
    wall_time: float
    sent: Counter
    sent_scalars: int
    written: set = field(default_factory=set)


class OwnershipError(AssertionError):
    pass


class _StepRunner:
    def __init__(self, ws: WorkerState, links: Links, h: Mpo, dt: float, step: int,
                 policy: TruncationPolicy, krylov: KrylovConfig, debug: bool):
        self.ws, self.links, self.w_mpo = ws, links, h.tensors
        self.dt, self.step, self.policy, self.krylov, self.debug = dt, step, policy, krylov, debug
        self.discarded = 0.0
        self.unconverged = 0
        self.written: set = set()
        self.phase = 0

    # ownership bookkeeping (checked only in debug mode)
    def _set_site(self, j, value):
        ws = self.ws
        if self.debug and not ws.lo <= j <= ws.hi:
            raise OwnershipError(f"worker {ws.rank} wrote foreign site {j}")
        ws.sites[j] = value
        self.written.add(("site", j))

    def _set_bond(self, j, value, copy=False):
        ws = self.ws
        if self.debug:
            owned = ws.lo <= j <= ws.hi - (1 if ws.is_last else 0)
            if copy != (not owned) or (copy and j != ws.lo - 1):
                raise OwnershipError(f"worker {ws.rank} wrote bond {j} (copy={copy})")
        ws.bonds[j] = value
        if not copy:
            self.written.add(("bond", j))

    def _pair(self, j, beta, gamma, psi_r, tau):
        ws = self.ws
        theta = pair_theta(ws.sites[j], ws.bonds[j], psi_r)
        res = evolve_pair(beta, self.w_mpo[j], self.w_mpo[j + 1], gamma, theta, tau, self.krylov)
        self.unconverged += not res.converged
        psi_l, bond, psi_r, w = split_theta(res.vector, self.policy)
        self.discarded += w
        return psi_l, bond, psi_r

    def _backward(self, j):
        ws = self.ws
        res = evolve_site(ws.left[j], self.w_mpo[j], ws.right[j], ws.sites[j],
                          0.5j * self.dt, self.krylov)
        self.unconverged += not res.converged
        self._set_site(j, res.vector)

    def _tag(self, boundary):
        return dict(step=self.step, phase=self.phase, boundary=boundary)

    def _send(self, link, kind, boundary, payload):
        link.send(BoundaryMessage(kind, self.step, self.phase, boundary, payload))

    # boundary roles
    def left_role(self, diverging: bool):
        ws, h = self.ws, self.ws.hi
        link = self.links.right
        self._send(link, MessageKind.ENV_TRANSFER, h, ws.left[h])
        gamma_next = link.recv(MessageKind.ENV_TRANSFER, **self._tag(h))
        psi_next = link.recv(MessageKind.SITE_REQUEST, **self._tag(h))
        psi_l, bond, psi_r = self._pair(h, ws.left[h], gamma_next, psi_next, -0.5j * self.dt)
        self._send(link, MessageKind.UPDATED_PAIR, h, (psi_l, bond, psi_r))
        self._set_site(h, psi_l)
        self._set_bond(h, bond)
        ws.right[h] = update_right_environment(gamma_next, psi_r, bond, self.w_mpo[h + 1])
        if diverging:
            self._backward(h)

    def right_role(self, diverging: bool):
        ws, lo = self.ws, self.ws.lo
        h = lo - 1
        link = self.links.left
        beta_prev = link.recv(MessageKind.ENV_TRANSFER, **self._tag(h))
        self._send(link, MessageKind.ENV_TRANSFER, h, ws.right[lo])
        self._send(link, MessageKind.SITE_REQUEST, h, ws.sites[lo])
        psi_l, bond, psi_r = link.recv(MessageKind.UPDATED_PAIR, **self._tag(h))
        self._set_site(lo, psi_r)
        self._set_bond(h, bond, copy=True)
        ws.left[lo] = update_left_environment(beta_prev, psi_l, bond, self.w_mpo[h])
        if diverging:
            self._backward(lo)

    def _pair_tau(self, j):
        """Forward step for an internal pair, or None when it was already done."""
        ws = self.ws
        chain_end = j == 0 or j + 1 == ws.n_sites - 1
        if ws.fuses_turn and chain_end:
            return -1j * self.dt if self.phase == 0 else None
        return -0.5j * self.dt

    def sweep_right(self):
        ws = self.ws
        if not ws.is_first:
            self.right_role(diverging=True)
        for j in range(ws.lo, ws.hi):
            tau = self._pair_tau(j)
            if tau is not None:
                psi_l, bond, psi_r = self._pair(j, ws.left[j], ws.right[j + 1],
                                                ws.sites[j + 1], tau)
                self._set_site(j, psi_l)
                self._set_bond(j, bond)
                self._set_site(j + 1, psi_r)
            ws.left[j + 1] = update_left_environment(ws.left[j], ws.sites[j], ws.bonds[j],
                                                     self.w_mpo[j])
            if j + 1 < ws.hi or not ws.is_last:
                self._backward(j + 1)
        if not ws.is_last:
            self.left_role(diverging=False)

    def sweep_left(self):
        ws = self.ws
        if not ws.is_last:
            self.left_role(diverging=True)
        for j in range(ws.hi - 1, ws.lo - 1, -1):
            tau = self._pair_tau(j)
            if tau is not None:
                psi_l, bond, psi_r = self._pair(j, ws.left[j], ws.right[j + 1],
                                                ws.sites[j + 1], tau)
                self._set_site(j, psi_l)
                self._set_bond(j, bond)
                self._set_site(j + 1, psi_r)
            ws.right[j] = update_right_environment(ws.right[j + 1], ws.sites[j + 1],
                                                   ws.bonds[j], self.w_mpo[j + 1])
            if j > ws.lo or not ws.is_first:
                self._backward(j)
        if not ws.is_first:
            self.right_role(diverging=False)

    def handshake(self):
        ws = self.ws
        if self.links.left is not None:
            self._send(self.links.left, MessageKind.HANDSHAKE, ws.lo - 1, (ws.lo, ws.hi))
        if self.links.right is not None:
            self._send(self.links.right, MessageKind.HANDSHAKE, ws.hi, (ws.lo, ws.hi))
        if self.links.left is not None:
            lo, hi = self.links.left.recv(MessageKind.HANDSHAKE, **self._tag(ws.lo - 1))
            if hi != ws.lo - 1:
                raise ValueError(f"worker {ws.rank}: left neighbour ends at {hi}, not {ws.lo - 1}")
        if self.links.right is not None:
            lo, hi = self.links.right.recv(MessageKind.HANDSHAKE, **self._tag(ws.hi))
            if lo != ws.hi + 1:
                raise ValueError(f"worker {ws.rank}: right neighbour starts at {lo}")

    def run(self) -> WorkerReport:
        start = time.perf_counter()
        self.handshake()
        for phase in (0, 1):
            self.phase = phase
            if self.ws.sweeps_left_first != (phase == 1):
                self.sweep_left()
            else:
                self.sweep_right()
        elapsed = time.perf_counter() - start
        return WorkerReport(self.ws.rank, self.discarded, self.unconverged, elapsed,
                            self.links.sent(), self.links.sent_scalars(), self.written)


def worker_timestep(ws: WorkerState, links: Links, h: Mpo, dt: float, step: int,
                    policy: TruncationPolicy, krylov: KrylovConfig,
                    debug: bool = False) -> tuple[WorkerState, WorkerReport]:
    """Run both half-steps of one timestep on this worker's partition."""
    report = _StepRunner(ws, links, h, dt, step, policy, krylov, debug).run()
    return ws, report
