"""Coordinator for parallel 2TDVP.

The coordinator owns no tensors during a step.  It scatters the state and
the serially built environments once, launches one worker per partition
through a transport each step, and gathers the state back to measure the
norm.  Reorthonormalization is a global serial section.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, replace
from typing import NamedTuple

from ..linalg import KrylovConfig, TruncationPolicy
from ..mpo import Mpo
from ..mps import InvCanonicalMps, norm_error, orthonormalize
from ..tdvp import init_environments
from .partition import PartitionPlan
from .transport import MessageKind, ThreadTransport
from .worker import OwnershipError, WorkerReport, WorkerState, worker_timestep

log = logging.getLogger(__name__)

# every boundary, every half-step: (kind, count) sent in total by both sides
MESSAGE_BUDGET = {
    MessageKind.ENV_TRANSFER.value: 2,
    MessageKind.SITE_REQUEST.value: 1,
    MessageKind.UPDATED_PAIR.value: 1,
}


@dataclass(frozen=True)
class StabilityConfig:
    """Controls against the norm drift of the parallel splitting.

    ``epsilon`` replaces the relative SVD cutoff of the truncation policy.
    Reorthonormalization runs when ``|1 - |psi||`` exceeds
    ``norm_error_threshold`` and at least ``reorth_interval_min`` steps have
    passed since the last one.
    """

    epsilon: float = 1e-12
    norm_error_threshold: float = 1e-4
    reorth_interval_min: int = 1

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if not self.norm_error_threshold > 0:
            raise ValueError("norm_error_threshold must be positive")
        if self.reorth_interval_min < 1:
            raise ValueError("reorth_interval_min must be at least 1")


class VelocityCheck(NamedTuple):
    ratio: float
    exceeded: bool


def check_velocity_criterion(velocity: float, n_sites: int, n_workers: int, dt: float,
                             fraction: float = 0.1) -> VelocityCheck:
    """Advisory check that information does not cross a partition within one step.

    The boundary environments lag by one half-step, which is harmless while
    ``v * dt`` is small next to the partition width ``N / p``.
    """
    if min(velocity, n_sites, n_workers, dt) <= 0:
        raise ValueError("all inputs must be positive")
    ratio = velocity * dt * n_workers / n_sites
    exceeded = ratio > fraction
    if exceeded:
        warnings.warn(f"v*dt*p/N = {ratio:.3g} exceeds {fraction}; boundary environments "
                      "may lag the dynamics", RuntimeWarning, stacklevel=2)
    return VelocityCheck(ratio, exceeded)


def maybe_reorthonormalize(psi: InvCanonicalMps, stability: StabilityConfig,
                           steps_since_last: int | None = None,
                           policy: TruncationPolicy | None = None) -> tuple[InvCanonicalMps, bool]:
    """Orthonormalize ``psi`` when its norm error is above threshold."""
    if steps_since_last is not None and steps_since_last < stability.reorth_interval_min:
        return psi, False
    err = norm_error(psi)
    if not err > stability.norm_error_threshold:
        return psi, False
    out, discarded = orthonormalize(psi, policy)
    log.info("reorthonormalized: norm error %.3e, discarded %.3e", err, discarded)
    return out, True


def scatter(psi: InvCanonicalMps, h: Mpo, plan: PartitionPlan) -> list[WorkerState]:
    """Split the state and its serially built environments across workers."""
    if plan.n_sites != psi.n_sites:
        raise ValueError(f"plan covers {plan.n_sites} sites, state has {psi.n_sites}")
    cache = init_environments(psi, h)
    workers = []
    for k in range(plan.n_workers):
        sites = plan.sites(k)
        lo, hi = sites.start, sites.stop - 1
        bond_ids = range(max(lo - 1, 0), min(hi, psi.n_sites - 2) + 1)
        workers.append(WorkerState(
            rank=k, n_workers=plan.n_workers, n_sites=psi.n_sites, lo=lo, hi=hi,
            sites={j: psi.sites[j] for j in sites},
            bonds={j: psi.bonds[j] for j in bond_ids},
            left={j: cache.left[j] for j in sites},
            right={j: cache.right[j] for j in sites},
        ))
    return workers


def gather(workers: list[WorkerState]) -> InvCanonicalMps:
    """Reassemble the chain; each bond comes from the worker owning its left site."""
    sites, bonds = [], []
    for ws in sorted(workers, key=lambda w: w.rank):
        for j in range(ws.lo, ws.hi + 1):
            sites.append(ws.sites[j])
            if j < ws.n_sites - 1:
                bonds.append(ws.bonds[j])
    return InvCanonicalMps(sites, bonds)


def audit_messages(reports: list[WorkerReport], plan: PartitionPlan, step: int) -> Counter:
    """Check the per-boundary, per-half-step message budget.

    Returns the number of messages of each kind sent during ``step``.
    """
    totals: Counter = Counter()
    by_slot: Counter = Counter()
    for rep in reports:
        for (kind, bond, s, phase), count in rep.sent.items():
            if s == step:
                totals[kind] += count
                by_slot[(kind, bond, phase)] += count
    boundary_bonds = [plan.boundaries[k + 1] - 1 for k in range(plan.n_workers - 1)]
    for kind, expected in MESSAGE_BUDGET.items():
        for bond in boundary_bonds:
            for phase in (0, 1):
                got = by_slot.pop((kind, bond, phase), 0)
                if got != expected:
                    raise AssertionError(f"step {step}, half {phase}, bond {bond}: "
                                         f"{got} {kind} messages, expected {expected}")
    stray = {k: v for k, v in by_slot.items() if k[0] in MESSAGE_BUDGET}
    if stray:
        raise AssertionError(f"messages on non-boundary bonds: {stray}")
    return totals


class ParallelStepResult(NamedTuple):
    discarded_weight: float
    per_worker_discarded: list[float]
    unconverged: int
    wall_times: list[float]
    messages: Counter
    message_scalars: int


def _check_disjoint_writes(reports: list[WorkerReport]):
    seen: dict = {}
    for rep in reports:
        for key in rep.written:
            if key in seen:
                raise OwnershipError(f"{key} written by workers {seen[key]} and {rep.rank}")
            seen[key] = rep.rank


def parallel_timestep(workers: list[WorkerState], h: Mpo, dt: float, policy: TruncationPolicy,
                      krylov: KrylovConfig = KrylovConfig(), transport=None, step: int = 0,
                      debug: bool = False) -> tuple[list[WorkerState], list[WorkerReport]]:
    """One timestep on all workers; returns the updated workers and their reports."""
    transport = ThreadTransport() if transport is None else transport
    by_rank = sorted(workers, key=lambda w: w.rank)

    def run(rank, links):
        return worker_timestep(by_rank[rank], links, h, dt, step, policy, krylov, debug)

    results = transport.run(run, len(by_rank))
    new_workers = [ws for ws, _ in results]
    reports = [rep for _, rep in results]
    if debug:
        _check_disjoint_writes(reports)
    return new_workers, reports


class ParallelEngine:
    """Stateful driver: scatter once, step many times, gather on demand."""

    def __init__(self, psi: InvCanonicalMps, h: Mpo, plan: PartitionPlan,
                 policy: TruncationPolicy, krylov: KrylovConfig = KrylovConfig(),
                 transport=None, stability: StabilityConfig = StabilityConfig(),
                 debug: bool = False, audit: bool = True):
        self.h, self.plan, self.krylov = h, plan, krylov
        self.policy = replace(policy, epsilon=stability.epsilon)
        self.transport = ThreadTransport() if transport is None else transport
        self.stability, self.debug, self.audit = stability, debug, audit
        self.workers = scatter(psi, h, plan)
        self.step_count = 0
        self.steps_since_reorth = 0
        self.reorth_steps: list[int] = []

    def state(self) -> InvCanonicalMps:
        return gather(self.workers)

    def step(self, dt: float) -> ParallelStepResult:
        step_id = self.step_count
        self.workers, reports = parallel_timestep(self.workers, self.h, dt, self.policy,
                                                  self.krylov, self.transport, step_id,
                                                  self.debug)
        totals = audit_messages(reports, self.plan, step_id) if self.audit else Counter()
        if not self.audit:
            for rep in reports:
                for (kind, _, _, _), count in rep.sent.items():
                    totals[kind] += count
        self.step_count += 1
        self.steps_since_reorth += 1
        per_worker = [rep.discarded_weight for rep in reports]
        return ParallelStepResult(
            discarded_weight=float(math.fsum(per_worker)),
            per_worker_discarded=per_worker,
            unconverged=sum(rep.unconverged for rep in reports),
            wall_times=[rep.wall_time for rep in reports],
            messages=totals,
            message_scalars=sum(rep.sent_scalars for rep in reports),
        )

    def stabilize(self) -> bool:
        """Gather, and reorthonormalize plus re-scatter when the norm has drifted."""
        psi, ran = maybe_reorthonormalize(self.state(), self.stability, self.steps_since_reorth,
                                          self.policy)
        if ran:
            self.workers = scatter(psi, self.h, self.plan)
            self.steps_since_reorth = 0
            self.reorth_steps.append(self.step_count)
        return ran
