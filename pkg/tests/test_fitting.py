import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptdvp.fitting import fit_exponentials, hankel_estimate, power_law


def test_single_exponential_is_exact():
    target = 0.5 ** np.arange(20)
    fit = fit_exponentials(None, 20, 1, target=target)
    assert fit.coefficients[0] == pytest.approx(1.0, abs=1e-12)
    assert fit.rates[0] == pytest.approx(0.5, abs=1e-12)
    assert fit.max_abs_error <= 1e-12


def test_two_exponentials_recovered_by_hankel_stage():
    r = np.arange(30)
    target = 0.7 * 0.9**r + 0.3 * 0.4**r
    c, x = hankel_estimate(target, 2)
    order = np.argsort(x)[::-1]
    np.testing.assert_allclose(x[order], [0.9, 0.4], atol=1e-9)
    np.testing.assert_allclose(c[order], [0.7, 0.3], atol=1e-9)


def test_alpha2_nine_exponentials_on_100_sites():
    fit = fit_exponentials(2.0, 100, 9)
    r = np.arange(1, 101)
    direct = np.max(np.abs(fit.coefficients @ (fit.rates[:, None] ** (r[None, :] - 1)) - r**-2.0))
    assert fit.max_abs_error == pytest.approx(direct, rel=1e-12)
    assert fit.max_abs_error < 1e-5


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        fit_exponentials(2.0, 3, 4)
    with pytest.raises(ValueError):
        fit_exponentials(-1.0, 10, 2)
    with pytest.raises(ValueError):
        fit_exponentials(2.0, 10, 0)


def test_error_non_increasing_in_number_of_exponentials():
    errs = [fit_exponentials(2.0, 100, k).max_abs_error for k in range(2, 13)]
    # allow roundoff-level ties once the fit saturates
    assert all(b <= a * (1 + 1e-6) + 1e-14 for a, b in zip(errs, errs[1:])), errs


@given(st.floats(0.5, 4.0), st.integers(10, 60), st.integers(1, 6))
def test_fit_invariants(alpha, r_max, k):
    fit = fit_exponentials(alpha, r_max, k)
    assert fit.n_exps == k and fit.fit_range == (1, r_max)
    assert np.all((fit.rates > 0) & (fit.rates < 1))
    r = np.arange(1, r_max + 1)
    assert fit.max_abs_error == pytest.approx(np.max(np.abs(fit(r) - power_law(alpha, r_max))))


@given(st.floats(0.5, 4.0), st.integers(10, 60), st.integers(1, 6))
def test_refinement_never_worse_than_initialization(alpha, r_max, k):
    from ptdvp.fitting import ExpSumFit
    target = power_law(alpha, r_max)
    init = ExpSumFit(*hankel_estimate(target, k), target)
    assert fit_exponentials(alpha, r_max, k).squared_error <= init.squared_error * (1 + 1e-12)
