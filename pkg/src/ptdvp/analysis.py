"""Post-processing of measured correlators."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig


def front_arrival_times(times: np.ndarray, values: np.ndarray, center: int,
                        threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """First time ``|values[:, r]|`` exceeds ``threshold`` at each distance from ``center``.

    ``values`` has shape ``(n_times, n_sites)``.  Distances where the front
    never arrives are dropped.  Both sides of the centre are pooled by taking
    the earlier arrival.
    """
    mag = np.abs(values)
    n = mag.shape[1]
    dists, arrivals = [], []
    for d in range(1, max(center, n - 1 - center) + 1):
        first = np.inf
        for r in (center - d, center + d):
            if 0 <= r < n:
                hit = np.nonzero(mag[:, r] > threshold)[0]
                if hit.size:
                    first = min(first, times[hit[0]])
        if np.isfinite(first):
            dists.append(d)
            arrivals.append(first)
    return np.array(dists, dtype=float), np.array(arrivals)


def front_velocity(times: np.ndarray, values: np.ndarray, center: int,
                   threshold: float = 1e-3) -> float:
    """Least-squares slope of distance against arrival time of the correlation front."""
    d, t = front_arrival_times(times, values, center, threshold)
    if d.size < 2 or np.ptp(t) == 0:
        raise ValueError("front reached fewer than two distinct times")
    slope, _ = np.polyfit(t, d, 1)
    return float(slope)


@dataclass
class CorrelatorComparison:
    """Dynamical correlator on the interior half of the chain, three ways.

    Arrays are indexed ``[time, offset]`` with offsets ``x = r - k``.  The
    summary extrema skip ``t = 0``, where every relative difference vanishes
    at the reference site by construction.
    """

    times: np.ndarray
    offsets: np.ndarray
    serial: np.ndarray
    parallel: np.ndarray
    exact: np.ndarray
    eta_p: np.ndarray
    eta_inf: np.ndarray
    w_serial: float
    wall: dict

    @property
    def max_eta_p(self) -> float:
        return float(np.nanmax(self.eta_p[self.times > 0]))

    @property
    def min_eta_inf(self) -> float:
        return float(np.nanmin(self.eta_inf[self.times > 0]))


def inverse_square_correlator_config(n_sites: int, tmax: float, dt: float, n_exps: int,
                                     chi: int, n_workers: int) -> RunConfig:
    return RunConfig.from_dict({
        "model": {"model": "XXXLR", "n_sites": n_sites, "alpha": 2.0, "n_exps": n_exps},
        "evolution": {"dt": dt, "n_steps": int(round(tmax / dt))},
        "truncation": {"chi_max": chi, "w_max": 1e-16},
        "initial_state": {"kind": "dmrg_ground", "perturbation": "sz",
                          "dmrg": {"chi_max": chi, "energy_tol": 1e-11}},
        "parallel": {"n_workers": n_workers},
        "observables": ["dynamical_zz"],
    })


def compare_inverse_square_correlator(n_sites: int = 33, tmax: float = 2.0, dt: float = 0.025,
                                      n_exps: int = 8, chi: int = 64,
                                      n_workers: int = 2) -> CorrelatorComparison:
    """Serial and parallel runs of the 1/r^2 XXX chain against the infinite-chain integral."""
    from .harness import run_evolve
    from .oracle import eta_infinity, eta_p, haldane_shastry_c_infinity

    grids, wall, w = {}, {}, 0.0
    for p in (1, n_workers):
        start = time.perf_counter()
        rec = run_evolve(inverse_square_correlator_config(n_sites, tmax, dt, n_exps, chi, p),
                         write=False)
        wall[p] = time.perf_counter() - start
        times, grids[p] = rec.grid("dynamical_zz")
        if p == 1:
            w = rec.w_total
    k = n_sites // 2
    lo, hi = k - n_sites // 4, k + n_sites // 4
    offsets = np.arange(lo, hi + 1) - k
    ser = grids[1][:, lo:hi + 1]
    par = grids[n_workers][:, lo:hi + 1]
    exact = np.array([[haldane_shastry_c_infinity(int(x), float(t)) for x in offsets]
                      for t in times])
    ep = np.vectorize(eta_p)(par, ser)
    ei = np.vectorize(eta_infinity)(ser, exact)
    return CorrelatorComparison(times, offsets, ser, par, exact, ep, ei, w, wall)
