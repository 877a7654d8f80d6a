import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptdvp.fitting import fit_exponentials
from ptdvp.mpo import (SZ, Model, ModelSpec, Mpo, build_mpo, expectation, identity_mpo,
                       local_sum_mpo, mpo_bond_dimension, mpo_to_dense)
from ptdvp.mps import basis_state, random_mps, to_dense
from ptdvp.oracle import dense_hamiltonian

N_TERMS = {Model.ISING_LR: 1, Model.XY_LR: 2, Model.XXX_LR: 3}


def lr_spec(model, n=6, k=3, alpha=2.3, b=0.4):
    return ModelSpec(model, n, alpha, b, 0.0, k)


def test_xxx_bond_dimensions_of_published_runs():
    for k, m in ((12, 38), (9, 29)):
        fit = fit_exponentials(2.0, 40, k)
        assert build_mpo(ModelSpec(Model.XXX_LR, 4, 2.0, n_exps=k), fit).bond_dim == m


def test_bond_dimension_law_exhaustive():
    for model, k in itertools.product(N_TERMS, range(1, 16)):
        spec = ModelSpec(model, 3, 1.5, n_exps=k)
        fit = fit_exponentials(None, k, k, target=np.linspace(1.0, 0.5, k))
        assert mpo_bond_dimension(spec) == N_TERMS[model] * k + 2
        assert build_mpo(spec, fit).bond_dim == N_TERMS[model] * k + 2


def test_nearest_neighbour_ising_dense():
    spec = ModelSpec(Model.ISING_NN, 6, field_B=0.3)
    h = build_mpo(spec)
    assert h.bond_dim == 3
    np.testing.assert_allclose(mpo_to_dense(h), dense_hamiltonian(spec), atol=1e-12)


def test_single_site_and_two_site_automata():
    np.testing.assert_allclose(mpo_to_dense(local_sum_mpo(SZ, 1)), SZ)
    zz = build_mpo(ModelSpec(Model.ISING_NN, 2))
    np.testing.assert_allclose(mpo_to_dense(zz), -np.kron(SZ, SZ), atol=1e-15)


def test_ising_lr_dense_with_fit_and_power_law():
    spec = lr_spec(Model.ISING_LR, n=8, k=4)
    fit = fit_exponentials(2.3, 7, 4)
    dense = mpo_to_dense(build_mpo(spec, fit))
    np.testing.assert_allclose(dense, dense_hamiltonian(spec, fit), atol=1e-12)
    # power-law couplings differ by at most the fit error on each of the N(N-1)/2 bonds
    bound = fit.max_abs_error * 8 * 7 / 2
    assert np.linalg.norm(dense - dense_hamiltonian(spec), 2) <= bound + 1e-12


def test_rejects_inconsistent_fit():
    spec = lr_spec(Model.XY_LR, k=3)
    with pytest.raises(ValueError):
        build_mpo(spec, fit_exponentials(2.3, 10, 2))
    with pytest.raises(ValueError):
        build_mpo(spec)
    with pytest.raises(ValueError):
        ModelSpec(Model.XY_LR, 1, 2.0, n_exps=1)
    with pytest.raises(ValueError):
        ModelSpec(Model.XY_LR, 4, -1.0, n_exps=1)
    with pytest.raises(ValueError):
        Mpo([np.zeros((2, 2, 2, 1))])


def test_classical_energy_and_identity():
    assert expectation(basis_state([1] * 7), build_mpo(ModelSpec(Model.ISING_NN, 7))) == \
        pytest.approx(-6.0)
    psi = random_mps([2] * 5, 4, seed=3)
    assert expectation(psi, identity_mpo([2] * 5)) == pytest.approx(1.0)


def test_expectation_matches_dense(rng):
    spec = lr_spec(Model.ISING_LR, n=8, k=3)
    fit = fit_exponentials(2.3, 7, 3)
    psi = random_mps([2] * 8, 6, seed=11)
    v = to_dense(psi)
    exact = np.vdot(v, dense_hamiltonian(spec, fit) @ v) / np.vdot(v, v)
    assert abs(expectation(psi, build_mpo(spec, fit)) - exact) <= 1e-9


@given(st.sampled_from(list(Model)), st.integers(2, 6), st.integers(1, 3),
       st.floats(0.3, 3.0), st.floats(-1, 1), st.floats(0, 1e-3))
def test_hermitian_and_dense_equivalent(model, n, k, alpha, b, db):
    spec = ModelSpec(model, n, alpha, b, db, k)
    fit = fit_exponentials(alpha, max(n - 1, k), k) if spec.long_range else None
    dense = mpo_to_dense(build_mpo(spec, fit))
    np.testing.assert_allclose(dense, dense.conj().T, atol=1e-12)
    np.testing.assert_allclose(dense, dense_hamiltonian(spec, fit), atol=1e-12)


def test_dense_cap():
    with pytest.raises(ValueError):
        mpo_to_dense(identity_mpo([2] * 15))
