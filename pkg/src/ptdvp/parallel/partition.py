"""Contiguous splitting of the chain across an even number of workers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

MIN_SITES = 2

# (N, p) -> sites owned by (first, each central, last) worker in the
# published benchmark runs
PUBLISHED_PLANS: dict[tuple[int, int], tuple[int, int, int]] = {
    (129, 8): (17, 16, 16),
    (129, 16): (9, 8, 8),
    (129, 24): (10, 5, 9),
    (129, 32): (5, 4, 4),
    (101, 8): (15, 12, 14),
    (101, 16): (9, 6, 8),
    (101, 24): (7, 4, 6),
    (101, 32): (6, 3, 5),
    (201, 32): (11, 6, 10),
}


@dataclass(frozen=True)
class PartitionPlan:
    """Worker ``k`` owns sites ``boundaries[k] <= j < boundaries[k+1]`` (0-based)."""

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        p = len(b) - 1
        if p < 2 or p % 2:
            raise ValueError(f"number of partitions must be even and >= 2, got {p}")
        if b[0] != 0:
            raise ValueError("first partition must start at site 0")
        sizes = [b[k + 1] - b[k] for k in range(p)]
        if min(sizes) < MIN_SITES:
            raise ValueError(f"every partition needs at least {MIN_SITES} sites, got {sizes}")

    @property
    def n_workers(self) -> int:
        return len(self.boundaries) - 1

    @property
    def n_sites(self) -> int:
        return self.boundaries[-1]

    @property
    def sizes(self) -> list[int]:
        b = self.boundaries
        return [b[k + 1] - b[k] for k in range(self.n_workers)]

    def sites(self, rank: int) -> range:
        return range(self.boundaries[rank], self.boundaries[rank + 1])

    def owner(self, site: int) -> int:
        for k in range(self.n_workers):
            if site < self.boundaries[k + 1]:
                return k
        raise IndexError(site)


def _check_counts(n_sites: int, n_workers: int):
    if n_workers < 2 or n_workers % 2:
        raise ValueError(f"number of workers must be even and >= 2, got {n_workers}")
    if n_workers > n_sites // MIN_SITES:
        raise ValueError(f"{n_workers} workers need at least {MIN_SITES * n_workers} sites, "
                         f"chain has {n_sites}")


def _from_sizes(sizes: Sequence[int]) -> PartitionPlan:
    bounds = [0]
    for s in sizes:
        bounds.append(bounds[-1] + s)
    return PartitionPlan(tuple(bounds))


def plan_partitions(n_sites: int, n_workers: int, mode: str = "uniform",
                    sizes: Sequence[int] | None = None) -> PartitionPlan:
    """Partition plan in one of three modes.

    ``uniform`` gives every worker ``N // p`` sites and hands the remainder out
    from the outside in (first, last, second, second to last, ...).
    ``paper_tables`` looks up the published splits.  ``explicit`` validates
    the given ``sizes``.
    """
    _check_counts(n_sites, n_workers)
    if mode == "uniform":
        base, rem = divmod(n_sites, n_workers)
        out = [base] * n_workers
        order = []
        for k in range(n_workers // 2):
            order += [k, n_workers - 1 - k]
        for k in order[:rem]:
            out[k] += 1
        return _from_sizes(out)
    if mode == "paper_tables":
        try:
            first, mid, last = PUBLISHED_PLANS[(n_sites, n_workers)]
        except KeyError:
            raise ValueError(f"no published partition for N={n_sites}, p={n_workers}") from None
        return _from_sizes([first] + [mid] * (n_workers - 2) + [last])
    if mode == "explicit":
        if sizes is None or len(sizes) != n_workers:
            raise ValueError(f"explicit mode needs {n_workers} partition sizes")
        if sum(sizes) != n_sites:
            raise ValueError(f"partition sizes sum to {sum(sizes)}, chain has {n_sites} sites")
        return _from_sizes(sizes)
    raise ValueError(f"unknown partition mode {mode!r}")
