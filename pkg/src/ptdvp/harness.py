"""Experiment drivers: build the problem from a RunConfig, evolve, measure, write.

Wall times exclude observable evaluation.  Outputs written to
``cfg.output_dir``:

* ``<observable>.csv`` in long format ``t, site, re, im`` (site is 1-based,
  0 for chain-wide scalars such as the energy)
* ``steps.csv`` with one row of diagnostics per timestep
* ``workers.csv`` with per-worker wall time and discarded weight
* ``summary.json`` with run-level scalars, ``config.json``, ``final.mps``
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from . import checkpoint
from .config import ConfigError, NumericalError, RunConfig
from .dmrg import dmrg_ground_state
from .fitting import ExpSumFit, fit_exponentials
from .linalg import TruncationPolicy
from .mpo import DOWN, SX, SY, SZ, UP, ModelSpec, Mpo, build_mpo, expectation
from .mps import (InvCanonicalMps, ProductStateSpec, apply_local, expect_local_all,
                  from_product_state, infidelity, local_matrix_elements, max_bond,
                  norm_error, overlap, random_mps)
from .parallel import ParallelEngine, make_transport, maybe_reorthonormalize, plan_partitions
from .tdvp import init_right_environments, serial_timestep

log = logging.getLogger(__name__)

LOCAL_STATES = {"up": UP, "down": DOWN, "x+": (UP + DOWN) / np.sqrt(2)}


# ---------------------------------------------------------------- problem setup

def build_fit(spec: ModelSpec, fit_range: int) -> ExpSumFit | None:
    if not spec.long_range:
        return None
    return fit_exponentials(spec.alpha, fit_range, spec.n_exps)


def build_hamiltonian(cfg: RunConfig, ground: bool = False) -> tuple[ModelSpec, ExpSumFit | None, Mpo]:
    """MPO for evolution (``delta_B`` dropped) or for the ground-state search."""
    spec = cfg.model.spec()
    if not ground:
        spec = spec.without_perturbation()
    fit = build_fit(spec, cfg.model.effective_fit_range)
    return spec, fit, build_mpo(spec, fit)


def perturbation_operator(kind: str, angle: float) -> np.ndarray:
    if kind == "sz":
        return SZ.copy()
    if kind == "rot_y":
        return scipy.linalg.expm(1j * angle * SY)
    raise ConfigError(f"unknown perturbation {kind!r}")


@dataclass
class InitialState:
    unperturbed: InvCanonicalMps
    state: InvCanonicalMps
    t0: float = 0.0
    info: dict = field(default_factory=dict)


def prepare_initial_state(cfg: RunConfig) -> InitialState:
    ini = cfg.initial_state
    n = cfg.model.n_sites
    info: dict = {"kind": ini.kind}
    t0 = 0.0
    if ini.kind == "product":
        if ini.bits is not None:
            vecs = [UP if b == "1" else DOWN for b in ini.bits]
        else:
            try:
                vecs = [LOCAL_STATES[ini.local_state]] * n
            except KeyError:
                raise ConfigError(f"unknown local state {ini.local_state!r}") from None
        psi = from_product_state(ProductStateSpec(vecs))
    elif ini.kind == "random":
        psi = random_mps([2] * n, 8, seed=cfg.seed)
    elif ini.kind == "file":
        try:
            psi, meta = checkpoint.load(ini.path)
        except OSError as exc:
            raise ConfigError(f"cannot read initial state: {exc}") from exc
        if psi.n_sites != n:
            raise ConfigError(f"state file has {psi.n_sites} sites, model has {n}")
        t0 = float(meta.get("t", 0.0))
        info["source"] = str(ini.path)
    else:
        gcfg = replace(cfg, model=replace(cfg.model, **ini.ground_overrides))
        _, _, h_ground = build_hamiltonian(gcfg, ground=True)
        d = ini.dmrg
        res = dmrg_ground_state(h_ground, None,
                                TruncationPolicy(d.chi_max, 0.0, cfg.stability.epsilon),
                                max_sweeps=d.max_sweeps, energy_tol=d.energy_tol,
                                krylov=cfg.krylov, seed=cfg.seed)
        info.update(ground_energy=res.energy, dmrg_converged=res.converged,
                    dmrg_sweeps=len(res.sweep_energies), ground_gap=res.gap)
        psi = res.state
    unperturbed = psi
    if ini.perturbation is not None:
        site = cfg.reference_index if ini.perturbation_site is None else ini.perturbation_site - 1
        if not 0 <= site < n:
            raise ConfigError("perturbation_site outside the chain")
        psi = apply_local(psi, perturbation_operator(ini.perturbation, ini.perturbation_angle),
                          site)
        info.update(perturbation=ini.perturbation, perturbation_site=site + 1)
    return InitialState(unperturbed, psi, t0, info)


# ---------------------------------------------------------------- evolvers

class SerialEvolver:
    n_workers = 1

    def __init__(self, psi, h, policy, krylov):
        self.psi, self.h, self.policy, self.krylov = psi, h, policy, krylov
        self.cache = init_right_environments(psi, h)

    def step(self, dt):
        start = time.perf_counter()
        self.psi, self.cache, w, bad = serial_timestep(self.psi, self.h, self.cache, dt,
                                                       self.policy, self.krylov)
        elapsed = time.perf_counter() - start
        return w, bad, [elapsed], [w]

    def state(self):
        return self.psi

    def stabilize(self, stability, steps_since):
        psi, ran = maybe_reorthonormalize(self.psi, stability, steps_since, self.policy)
        if ran:
            self.psi = psi
            self.cache = init_right_environments(psi, self.h)
        return ran


class ParallelEvolver:
    def __init__(self, psi, h, policy, krylov, cfg: RunConfig):
        par = cfg.parallel
        plan = plan_partitions(cfg.model.n_sites, par.n_workers, par.mode, par.sizes)
        self.n_workers = par.n_workers
        self.engine = ParallelEngine(psi, h, plan, policy, krylov,
                                     make_transport(par.transport), cfg.stability,
                                     debug=par.debug)

    def step(self, dt):
        res = self.engine.step(dt)
        return res.discarded_weight, res.unconverged, res.wall_times, res.per_worker_discarded

    def state(self):
        return self.engine.state()

    def stabilize(self, stability, steps_since):
        return self.engine.stabilize()


def make_evolver(cfg: RunConfig, psi: InvCanonicalMps, h: Mpo):
    if cfg.parallel.n_workers == 1:
        return SerialEvolver(psi, h, cfg.policy(), cfg.krylov)
    return ParallelEvolver(psi, h, cfg.policy(), cfg.krylov, cfg)


# ---------------------------------------------------------------- measurement

@dataclass
class StepDiagnostics:
    step: int
    t: float
    discarded_weight: float
    max_chi: int
    norm_error: float
    wall_time: float
    unconverged: int
    reorthonormalized: bool
    worker_wall_times: list[float]
    worker_discarded: list[float]


class Observer:
    """Evaluates the configured observables on a state."""

    def __init__(self, cfg: RunConfig, h: Mpo, initial: InitialState):
        self.names = tuple(cfg.observables)
        self.k = cfg.reference_index
        self.h = h
        self.psi0 = initial.unperturbed
        self.x0 = expect_local_all(self.psi0, SX) if "x_deviation" in self.names else None
        self.e0 = expectation(self.psi0, h).real if "dynamical_zz" in self.names else 0.0

    def measure(self, psi: InvCanonicalMps, t: float) -> dict[str, list[tuple[float, int, complex]]]:
        out: dict[str, list] = {}
        n = psi.n_sites
        if "sz" in self.names or "zz_connected" in self.names:
            sz = expect_local_all(psi, SZ)
        if "sz" in self.names:
            out["sz"] = [(t, r + 1, sz[r]) for r in range(n)]
        if "zz_connected" in self.names:
            zz = local_matrix_elements(psi, SZ, apply_local(psi, SZ, self.k))
            zz = zz / overlap(psi, psi).real
            conn = zz - sz * sz[self.k]
            out["zz_connected"] = [(t, r + 1, conn[r]) for r in range(n)]
        if "x_deviation" in self.names:
            dx = np.abs(expect_local_all(psi, SX) - self.x0)
            out["x_deviation"] = [(t, r + 1, complex(dx[r])) for r in range(n)]
        if "dynamical_zz" in self.names:
            c = np.exp(1j * self.e0 * t) * local_matrix_elements(self.psi0, SZ, psi)
            out["dynamical_zz"] = [(t, r + 1, c[r]) for r in range(n)]
        if "energy" in self.names:
            out["energy"] = [(t, 0, expectation(psi, self.h))]
        return out


# ---------------------------------------------------------------- records

@dataclass
class RunRecord:
    config: RunConfig
    rows: dict[str, list[tuple[float, int, complex]]]
    steps: list[StepDiagnostics]
    summary: dict
    final_state: InvCanonicalMps

    @property
    def w_total(self) -> float:
        return math.fsum(s.discarded_weight for s in self.steps)

    def series(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(times, sites, values)`` arrays of one observable."""
        rows = self.rows.get(name, [])
        if not rows:
            return np.empty(0), np.empty(0, dtype=int), np.empty(0, dtype=complex)
        t, s, v = zip(*rows)
        return np.array(t), np.array(s), np.array(v)

    def grid(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """``(times, values[t_index, column])``; chain-wide observables get one column."""
        t, s, v = self.series(name)
        times = np.unique(t)
        first = int(s.min())
        out = np.full((times.size, int(s.max()) - first + 1), np.nan, dtype=complex)
        out[np.searchsorted(times, t), s - first] = v
        return times, out


def _write_outputs(record: RunRecord, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    for name, rows in record.rows.items():
        with open(outdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "site", "re", "im"])
            for t, site, val in rows:
                w.writerow([float(t), site, float(val.real), float(val.imag)])
    with open(outdir / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "discarded_weight", "max_chi", "norm_error", "wall_time",
                    "unconverged", "reorthonormalized"])
        for s in record.steps:
            w.writerow([s.step, float(s.t), float(s.discarded_weight), s.max_chi,
                        float(s.norm_error), float(s.wall_time), s.unconverged,
                        int(s.reorthonormalized)])
    with open(outdir / "workers.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "rank", "wall_time", "discarded_weight"])
        for s in record.steps:
            for rank, (wt, wd) in enumerate(zip(s.worker_wall_times, s.worker_discarded)):
                w.writerow([s.step, rank, float(wt), float(wd)])
    (outdir / "summary.json").write_text(json.dumps(record.summary, indent=2, default=_jsonable) + "\n")
    record.config.to_json(outdir / "config.json")
    checkpoint.save(outdir / "final.mps", record.final_state,
                    {"t": record.summary.get("t_final", 0.0)})


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


# ---------------------------------------------------------------- drivers

def run_evolve(cfg: RunConfig, write: bool = True) -> RunRecord:
    """Prepare, evolve and measure one run; partial outputs are flushed on failure."""
    cfg.validate()
    _, fit, h = build_hamiltonian(cfg)
    initial = prepare_initial_state(cfg)
    observer = Observer(cfg, h, initial)
    evolver = make_evolver(cfg, initial.state, h)
    ev = cfg.evolution
    rows: dict[str, list] = {name: [] for name in cfg.observables}
    steps: list[StepDiagnostics] = []
    t = initial.t0
    outdir = Path(cfg.output_dir) if (write and cfg.output_dir) else None

    def record_rows(psi, t):
        for name, new in observer.measure(psi, t).items():
            rows[name].extend(new)

    summary: dict = {"initial_state": initial.info, "n_workers": cfg.parallel.n_workers}
    if fit is not None:
        summary["fit"] = {"max_abs_error": fit.max_abs_error, "max_rel_error": fit.max_rel_error}
    e_initial = expectation(initial.state, h).real
    record_rows(initial.state, t)
    failure: Exception | None = None
    since_reorth = 0
    try:
        for step in range(1, ev.n_steps + 1):
            w, bad, worker_times, worker_w = evolver.step(ev.dt)
            since_reorth += 1
            start = time.perf_counter()
            ran = evolver.stabilize(cfg.stability, since_reorth)
            stab_time = time.perf_counter() - start
            if ran:
                since_reorth = 0
            t = initial.t0 + step * ev.dt
            psi = evolver.state()
            nerr = norm_error(psi)
            if not math.isfinite(nerr):
                raise NumericalError(f"state became non-finite at step {step}")
            steps.append(StepDiagnostics(step, t, w, max_bond(psi), nerr,
                                         max(worker_times) + stab_time, bad, ran,
                                         worker_times, worker_w))
            if step % ev.measure_every == 0 or step == ev.n_steps:
                record_rows(psi, t)
            if outdir and ev.checkpoint_every and step % ev.checkpoint_every == 0:
                outdir.mkdir(parents=True, exist_ok=True)
                checkpoint.save(outdir / "checkpoint.mps", psi, {"t": t, "step": step})
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        failure = NumericalError(f"evolution failed: {exc}")
        failure.__cause__ = exc
    final = evolver.state()
    e_final = expectation(final, h).real
    summary.update(
        w_total=math.fsum(s.discarded_weight for s in steps),
        steps_completed=len(steps),
        t_final=t,
        final_norm_error=norm_error(final),
        max_chi=max_bond(final),
        energy_initial=e_initial,
        energy_final=e_final,
        energy_drift_rel=abs(e_final - e_initial) / abs(e_initial) if e_initial else abs(e_final),
        wall_time=math.fsum(s.wall_time for s in steps),
        reorthonormalizations=[s.step for s in steps if s.reorthonormalized],
        unconverged_krylov=sum(s.unconverged for s in steps),
        failed=failure is not None,
    )
    record = RunRecord(cfg, rows, steps, summary, final)
    if outdir:
        _write_outputs(record, outdir)
    if failure is not None:
        raise failure
    return record


@dataclass
class CompareRow:
    n_workers: int
    infidelity: float
    max_observable_deviation: float
    w_total: float
    wall_time: float
    speedup: float


def run_compare(cfg: RunConfig, p_list, write: bool = True) -> list[CompareRow]:
    """Same physics at several worker counts, compared against p = 1."""
    p_list = sorted(set(int(p) for p in p_list) | {1})
    records: dict[int, RunRecord] = {}
    base = Path(cfg.output_dir) if (write and cfg.output_dir) else None
    for p in p_list:
        sub = str(base / f"p{p}") if base else None
        try:
            run_cfg = cfg.with_updates(parallel={"n_workers": p}, output_dir=sub)
        except ConfigError as exc:
            raise ConfigError(f"p={p}: {exc}") from exc
        records[p] = run_evolve(run_cfg, write=write)
    ref = records[1]
    out = []
    for p in p_list:
        rec = records[p]
        dev = 0.0
        for name, rows in rec.rows.items():
            ref_vals = np.array([v for _, _, v in ref.rows[name]])
            vals = np.array([v for _, _, v in rows])
            if vals.size:
                dev = max(dev, float(np.max(np.abs(vals - ref_vals))))
        wall = rec.summary["wall_time"]
        out.append(CompareRow(p, infidelity(rec.final_state, ref.final_state), dev,
                              rec.w_total, wall, ref.summary["wall_time"] / wall if wall else math.nan))
    if base:
        base.mkdir(parents=True, exist_ok=True)
        with open(base / "compare.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(asdict(out[0])))
            for row in out:
                w.writerow([float(v) if isinstance(v, float) else v for v in asdict(row).values()])
        (base / "compare.json").write_text(json.dumps([asdict(r) for r in out], indent=2) + "\n")
    return out


@dataclass
class GroundStateResult:
    path: Path | None
    energy: float
    energy_per_site: float
    converged: bool
    sweep_energies: list[float]
    gap: float
    state: InvCanonicalMps


def run_groundstate(cfg: RunConfig, write: bool = True) -> GroundStateResult:
    """Two-site DMRG for the configured model, including any ``delta_B`` term."""
    cfg.validate()
    _, _, h = build_hamiltonian(cfg, ground=True)
    d = cfg.initial_state.dmrg
    res = dmrg_ground_state(h, None, TruncationPolicy(d.chi_max, 0.0, cfg.stability.epsilon),
                            max_sweeps=d.max_sweeps, energy_tol=d.energy_tol,
                            krylov=cfg.krylov, seed=cfg.seed)
    n = cfg.model.n_sites
    path = None
    if write and cfg.output_dir:
        outdir = Path(cfg.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        path = checkpoint.save(outdir / "ground.mps", res.state,
                               {"energy": res.energy, "t": 0.0})
        (outdir / "groundstate.json").write_text(json.dumps({
            "energy": res.energy, "energy_per_site": res.energy / n,
            "converged": res.converged, "sweep_energies": res.sweep_energies,
            "gap": res.gap, "max_chi": max_bond(res.state)}, indent=2) + "\n")
        cfg.to_json(outdir / "config.json")
    return GroundStateResult(path, res.energy, res.energy / n, res.converged,
                             res.sweep_energies, res.gap, res.state)
