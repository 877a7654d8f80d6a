import csv
import json

import numpy as np
import pytest

from ptdvp import harness
from ptdvp.analysis import (compare_inverse_square_correlator, front_arrival_times,
                            front_velocity)
from ptdvp.checkpoint import load
from ptdvp.config import ConfigError, NumericalError, RunConfig
from ptdvp.mpo import SZ, Model, ModelSpec
from ptdvp.mps import infidelity
from ptdvp.oracle import DenseEvolver, dense_ground_state, dense_hamiltonian
from ptdvp.parallel import check_velocity_criterion

QUENCH = {
    "model": {"model": "IsingLR", "n_sites": 8, "alpha": 2.3, "field_B": 0.27, "n_exps": 3},
    "evolution": {"dt": 0.05, "n_steps": 6, "checkpoint_every": 3},
    "truncation": {"chi_max": 16},
    "initial_state": {"kind": "product", "local_state": "up", "perturbation": "rot_y"},
    "observables": ["zz_connected", "x_deviation", "dynamical_zz", "sz", "energy"],
}


def config(tmp_path=None, **sections):
    data = json.loads(json.dumps(QUENCH))
    for key, value in sections.items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    if tmp_path is not None:
        data["output_dir"] = str(tmp_path)
    return RunConfig.from_dict(data)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_outputs_and_summary(tmp_path):
    rec = harness.run_evolve(config(tmp_path))
    for name in QUENCH["observables"]:
        rows = read_csv(tmp_path / f"{name}.csv")
        times = [float(r["t"]) for r in rows]
        assert times == sorted(times)
    steps = read_csv(tmp_path / "steps.csv")
    assert len(steps) == 6
    w = sum(float(r["discarded_weight"]) for r in steps)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["w_total"] == pytest.approx(w, rel=1e-12, abs=1e-300)
    assert summary["w_total"] == rec.w_total and summary["steps_completed"] == 6
    assert RunConfig.from_json(tmp_path / "config.json") == rec.config
    final, meta = load(tmp_path / "final.mps")
    assert infidelity(final, rec.final_state) <= 1e-14
    _, meta = load(tmp_path / "checkpoint.mps")
    assert meta["step"] == 6


def test_stationary_state_keeps_observables_constant(tmp_path):
    cfg = RunConfig.from_dict({
        "model": {"model": "IsingNN", "n_sites": 6, "field_B": 0.0},
        "evolution": {"dt": 0.1, "n_steps": 5},
        "observables": ["sz", "zz_connected", "energy"], "output_dir": str(tmp_path)})
    rec = harness.run_evolve(cfg)
    assert rec.w_total <= 1e-26
    for name in ("sz", "zz_connected", "energy"):
        _, grid = rec.grid(name)
        assert np.allclose(grid, grid[0], atol=1e-12)


def test_dynamical_correlator_matches_heisenberg_picture():
    n, k = 6, 2
    cfg = RunConfig.from_dict({
        "model": {"model": "IsingNN", "n_sites": n, "field_B": 0.6},
        "evolution": {"dt": 0.05, "n_steps": 10}, "truncation": {"chi_max": 32},
        "initial_state": {"kind": "dmrg_ground", "perturbation": "sz"},
        "observables": ["dynamical_zz"], "reference_site": k + 1})
    rec = harness.run_evolve(cfg, write=False)
    times, grid = rec.grid("dynamical_zz")
    h = dense_hamiltonian(ModelSpec(Model.ISING_NN, n, field_B=0.6))
    ev = DenseEvolver(h)
    _, g = dense_ground_state(h)
    z = [np.kron(np.kron(np.eye(2**r), SZ), np.eye(2 ** (n - r - 1))) for r in range(n)]
    for i, t in enumerate(times):
        # <g| e^{iHt} Z_r e^{-iHt} Z_k |g>
        left = ev.evolve(g, t)
        right = ev.evolve(z[k] @ g, t)
        want = [np.vdot(left, z[r] @ right) for r in range(n)]
        np.testing.assert_allclose(grid[i], want, atol=1e-6)


def test_parallel_run_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        harness.run_evolve(config(tmp_path / name, parallel={"n_workers": 2}))
        outs.append({f: (tmp_path / name / f).read_bytes()
                     for f in ("sz.csv", "zz_connected.csv", "dynamical_zz.csv")})
    assert outs[0] == outs[1]


def test_compare_serial_entry_is_the_serial_run(tmp_path):
    cfg = config()
    rows = harness.run_compare(cfg, [2, 4], write=False)
    assert [r.n_workers for r in rows] == [1, 2, 4]
    direct = harness.run_evolve(cfg, write=False)
    serial = harness.run_evolve(cfg.with_updates(parallel={"n_workers": 1}), write=False)
    for a, b in zip(direct.final_state.sites, serial.final_state.sites):
        assert np.array_equal(a, b)
    assert rows[0].infidelity == 0.0 and rows[0].w_total == direct.w_total
    for row in rows[1:]:
        assert row.infidelity <= 1e-8 and row.max_observable_deviation <= 1e-5
    with pytest.raises(ConfigError):
        harness.run_compare(cfg, [6], write=False)


def test_compare_writes_table(tmp_path):
    harness.run_compare(config(tmp_path, evolution={"n_steps": 2}), [2])
    rows = read_csv(tmp_path / "compare.csv")
    assert [int(r["n_workers"]) for r in rows] == [1, 2]
    assert (tmp_path / "p2" / "summary.json").exists()


def test_resume_from_checkpoint(tmp_path):
    full = harness.run_evolve(config(tmp_path / "full"), write=True)
    first = harness.run_evolve(config(tmp_path / "half", evolution={"n_steps": 3}))
    resumed = harness.run_evolve(config(
        evolution={"n_steps": 3},
        initial_state={"kind": "file", "path": str(tmp_path / "half" / "checkpoint.mps"),
                       "perturbation": None}), write=False)
    assert resumed.summary["t_final"] == pytest.approx(0.3)
    assert infidelity(resumed.final_state, full.final_state) <= 1e-12
    assert first.summary["steps_completed"] == 3


def test_failure_flushes_partial_outputs(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = harness.serial_timestep

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 4:
            raise np.linalg.LinAlgError("SVD did not converge")
        return real(*args, **kwargs)

    monkeypatch.setattr(harness, "serial_timestep", flaky)
    with pytest.raises(NumericalError):
        harness.run_evolve(config(tmp_path))
    assert len(read_csv(tmp_path / "steps.csv")) == 3
    assert json.loads((tmp_path / "summary.json").read_text())["failed"]


def test_groundstate_matches_exact_diagonalization(tmp_path, reference):
    cfg = RunConfig.from_dict({"model": {"model": "IsingNN", "n_sites": 10, "field_B": 0.1},
                               "initial_state": {"dmrg": {"energy_tol": 1e-12}},
                               "output_dir": str(tmp_path)})
    res = harness.run_groundstate(cfg)
    assert res.converged
    assert res.energy == pytest.approx(reference["ising_nn_n10_b0.1_ground_energy"], abs=1e-8)
    assert res.energy_per_site == pytest.approx(res.energy / 10)
    state, meta = load(res.path)
    assert meta["energy"] == res.energy
    assert json.loads((tmp_path / "groundstate.json").read_text())["converged"]


def test_nearest_neighbour_lightcone_is_linear():
    cfg = RunConfig.from_dict({
        "model": {"model": "IsingNN", "n_sites": 12, "field_B": 0.27},
        "evolution": {"dt": 0.02, "n_steps": 200, "measure_every": 5},
        "truncation": {"chi_max": 32},
        "initial_state": {"kind": "dmrg_ground", "ground_overrides": {"field_B": 0.1}},
        "observables": ["zz_connected"], "reference_site": 6})
    rec = harness.run_evolve(cfg, write=False)
    times, grid = rec.grid("zz_connected")
    dist, arrival = front_arrival_times(times, grid, 5, 1e-3)
    assert len(dist) >= 3 and np.all(np.diff(arrival) > 0)
    v = front_velocity(times, grid, 5, 1e-3)
    # quasiparticle pairs spread at twice the maximal group velocity 2 min(J, B)
    assert 0.7 <= v <= 1.5
    assert not check_velocity_criterion(v, 12, 2, 0.02).exceeded


def _sz_response(model: dict) -> np.ndarray:
    runs = []
    for pert in ("rot_y", None):
        cfg = RunConfig.from_dict({
            "model": model, "evolution": {"dt": 0.02, "n_steps": 3},
            "truncation": {"chi_max": 16}, "observables": ["sz"],
            "initial_state": {"kind": "product", "local_state": "up", "perturbation": pert}})
        runs.append(harness.run_evolve(cfg, write=False).grid("sz")[1].real)
    return np.abs(runs[0] - runs[1])


def test_long_range_response_reaches_chain_ends_immediately():
    xy = _sz_response({"model": "XYLR", "n_sites": 13, "alpha": 0.75, "n_exps": 4})
    nn = _sz_response({"model": "IsingNN", "n_sites": 13, "field_B": 0.5})
    # one step after the kick, six sites away
    assert xy[1, 0] > 1e-5 and xy[1, 12] > 1e-5
    assert nn[1, 0] < 1e-9 and nn[1, 12] < 1e-9
    assert np.all(np.diff(xy[1:, 0]) > 0)


def test_front_helpers_on_synthetic_cone():
    times = np.linspace(0, 5, 501)
    sites = np.arange(11)
    grid = (np.abs(sites[None, :] - 5) <= 2.0 * times[:, None]).astype(float)
    dist, arrival = front_arrival_times(times, grid, 5, 0.5)
    np.testing.assert_array_equal(dist, [1, 2, 3, 4, 5])
    np.testing.assert_allclose(arrival, dist / 2.0, atol=0.01)
    assert front_velocity(times, grid, 5, 0.5) == pytest.approx(2.0, rel=1e-2)
    with pytest.raises(ValueError):
        front_velocity(times, np.zeros_like(grid), 5, 0.5)


def test_correlator_comparison_on_a_short_chain():
    res = compare_inverse_square_correlator(n_sites=9, tmax=0.1, dt=0.05, n_exps=3, chi=16)
    np.testing.assert_array_equal(res.offsets, [-2, -1, 0, 1, 2])
    assert res.serial.shape == res.exact.shape == (3, 5)
    # equal-time value at the reference site is <Z_k Z_k> = 1
    assert res.serial[0, 2] == pytest.approx(1.0, abs=1e-12)
    assert res.max_eta_p <= 1e-6
    assert 0 < res.min_eta_inf < 1
