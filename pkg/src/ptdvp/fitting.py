"""Sums of exponentials approximating power-law couplings.

A coupling profile ``f(r)`` on distances ``r = 1..R`` is replaced by
``sum_k c_k x_k**(r-1)`` with decaying rates ``0 < x_k < 1``; each term is
one channel of a finite-state MPO.  The fit is done in two stages: a
shift-invariance (Hankel) estimate of the rates followed by a
Levenberg-Marquardt refinement of all parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: extra Hankel columns beyond ``n_exps`` in the linear initialization
HANKEL_BUFFER = 2

_X_MIN = 1e-8
_X_MAX = 1.0 - 1e-12


@dataclass(frozen=True)
class ExpSumFit:
    coefficients: np.ndarray
    rates: np.ndarray
    target: np.ndarray
    converged: bool = True

    @property
    def n_exps(self) -> int:
        return self.rates.size

    @property
    def fit_range(self) -> tuple[int, int]:
        return (1, self.target.size)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (self.rates[None, :] ** (r.reshape(-1, 1) - 1.0)) @ self.coefficients

    def residual(self) -> np.ndarray:
        r = np.arange(1, self.target.size + 1)
        return self(r) - self.target

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.residual())))

    @property
    def max_rel_error(self) -> float:
        return float(np.max(np.abs(self.residual() / self.target)))

    @property
    def squared_error(self) -> float:
        res = self.residual()
        return float(res @ res)


def power_law(alpha: float, fit_range: int) -> np.ndarray:
    return np.arange(1, fit_range + 1, dtype=float) ** (-float(alpha))


def _vandermonde(rates: np.ndarray, n: int) -> np.ndarray:
    return rates[None, :] ** np.arange(n, dtype=float)[:, None]


def hankel_estimate(target: np.ndarray, n_exps: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear-algebraic initial guess for the rates and coefficients.

    The target is arranged in a Hankel matrix with ``n_exps + HANKEL_BUFFER``
    columns.  Its dominant right singular subspace is shift invariant for an
    exact exponential sum, so the rates are the eigenvalues of the shift
    operator restricted to that subspace.  Coefficients then follow from a
    linear least-squares solve.
    """
    f = np.asarray(target, dtype=float)
    n = f.size
    cols = min(n_exps + HANKEL_BUFFER, n)
    rows = n - cols + 1
    hank = np.lib.stride_tricks.sliding_window_view(f, cols)[:rows]
    _, _, vh = np.linalg.svd(hank, full_matrices=False)
    k = min(n_exps, cols - 1) if cols > 1 else 1
    sub = vh[:k].T
    if cols > 1:
        shift = np.linalg.lstsq(sub[:-1], sub[1:], rcond=None)[0]
        rates = np.linalg.eigvals(shift)
        # complex pairs are projected to their modulus; negative rates are
        # folded back since the channels must decay monotonically
        rates = np.abs(rates)
    else:
        rates = np.array([f[1] / f[0]]) if n > 1 else np.array([0.5])
    rates = np.clip(rates, _X_MIN, _X_MAX)
    if rates.size < n_exps:
        extra = np.linspace(0.2, 0.9, n_exps - rates.size)
        rates = np.concatenate([rates, extra])
    # break exact ties so the Vandermonde system stays solvable
    rates = np.sort(rates)
    for i in range(1, rates.size):
        if rates[i] <= rates[i - 1] * (1 + 1e-6):
            rates[i] = min(rates[i - 1] * (1 + 1e-3), _X_MAX)
    coeffs = np.linalg.lstsq(_vandermonde(rates, n), f, rcond=None)[0]
    return coeffs, rates


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _expit(u):
    # clamped so a saturated u cannot round a rate to exactly 0 or 1
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * u)), _X_MIN, _X_MAX)


def levenberg_marquardt(target: np.ndarray, coeffs: np.ndarray, rates: np.ndarray,
                        max_iter: int = 2000, ftol: float = 1e-14,
                        xtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, bool]:
    """Refine ``(c, x)`` by damped Gauss-Newton on the unweighted residual.

    Rates are parametrized as ``x = expit(u)`` so they stay inside (0, 1).
    Only steps that lower the squared error are accepted, so the result is
    never worse than the starting point.
    """
    f = np.asarray(target, dtype=float)
    k = coeffs.size
    r = np.arange(f.size, dtype=float)[:, None]

    def model(p):
        c, u = p[:k], p[k:]
        x = _expit(u)
        powers = x[None, :] ** r
        res = powers @ c - f
        dxdu = x * (1.0 - x)
        ju = c[None, :] * r * x[None, :] ** np.maximum(r - 1.0, 0.0) * dxdu[None, :]
        return res, np.hstack([powers, ju])

    p = np.concatenate([coeffs, _logit(np.clip(rates, _X_MIN, _X_MAX))])
    res, jac = model(p)
    cost = res @ res
    a = jac.T @ jac
    mu = 1e-3 * float(np.max(np.diag(a)))
    converged = False
    for _ in range(max_iter):
        a = jac.T @ jac
        g = jac.T @ res
        damp = np.diag(np.diag(a)) + 1e-300 * np.eye(a.shape[0])
        try:
            step = np.linalg.solve(a + mu * damp, -g)
        except np.linalg.LinAlgError:
            mu *= 10.0
            continue
        trial = p + step
        tres, tjac = model(trial)
        tcost = tres @ tres
        if np.isfinite(tcost) and tcost < cost:
            small_f = cost - tcost <= ftol * cost
            small_x = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
            p, res, jac, cost = trial, tres, tjac, tcost
            mu = max(mu * 0.3, 1e-15)
            if small_f and small_x:
                converged = True
                break
        else:
            mu *= 5.0
            if mu > 1e30:
                converged = True  # no descent direction left
                break
    return p[:k], _expit(p[k:]), converged


def fit_exponentials(alpha: float | None, fit_range: int, n_exps: int,
                     target: np.ndarray | None = None, max_iter: int = 2000) -> ExpSumFit:
    """Fit ``r**-alpha`` (or an explicit ``target`` on r = 1..R) by ``n_exps`` exponentials."""
    if target is None:
        if alpha is None or not alpha > 0:
            raise ValueError("alpha must be positive")
        target = power_law(alpha, fit_range)
    else:
        target = np.asarray(target, dtype=float)
        fit_range = target.size
    if n_exps < 1:
        raise ValueError("need at least one exponential")
    if n_exps > fit_range:
        raise ValueError(f"cannot fit {n_exps} exponentials to {fit_range} points")
    c0, x0 = hankel_estimate(target, n_exps)
    init = ExpSumFit(c0, x0, target)
    c, x, converged = levenberg_marquardt(target, c0, x0, max_iter=max_iter)
    fit = ExpSumFit(c, x, target, converged)
    if fit.squared_error > init.squared_error:
        return init
    order = np.argsort(fit.rates)[::-1]
    return ExpSumFit(fit.coefficients[order], fit.rates[order], target, converged)
