"""Dense complex kernels: truncated SVD and Krylov (Lanczos) solvers.

Everything here is a pure function of its arguments, so the same routines
are shared by the serial engine, the parallel workers and DMRG.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

#: Singular values below ``SVD_FLOOR * lambda_1`` are always dropped, even with
#: ``epsilon == 0``, so that the stored inverse weights never overflow.
SVD_FLOOR = 1e-14

#: Krylov breakdown threshold on the Lanczos off-diagonal.
BREAKDOWN = 1e-14

LinearOperator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond truncation rules applied after every SVD.

    ``w_max`` is the largest discarded weight allowed per SVD; ``epsilon``
    is the cutoff relative to the largest singular value.  The kept rank is
    ``min(chi_w, chi_max)`` where ``chi_w`` is the smallest rank whose tail
    weight does not exceed ``w_max``.
    """

    chi_max: int = 64
    w_max: float = 0.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if int(self.chi_max) != self.chi_max or self.chi_max < 1:
            raise ValueError(f"chi_max must be a positive integer, got {self.chi_max}")
        if not self.w_max >= 0:
            raise ValueError(f"w_max must be non-negative, got {self.w_max}")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class KrylovConfig:
    max_basis_vectors: int = 8
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_basis_vectors < 2:
            raise ValueError("max_basis_vectors must be at least 2")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


class SvdResult(NamedTuple):
    left_isometry: np.ndarray
    weights: np.ndarray
    right_isometry: np.ndarray
    discarded_weight: float
    kept_rank: int


class ExpmResult(NamedTuple):
    vector: np.ndarray
    converged: bool
    error: float
    n_basis: int


class EigResult(NamedTuple):
    value: float
    vector: np.ndarray
    converged: bool
    residual: float
    gap: float


def _svd(m: np.ndarray):
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge on nearly rank-deficient input
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def choose_rank(s: np.ndarray, policy: TruncationPolicy) -> int:
    """Kept rank for descending singular values ``s`` under ``policy``."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    cutoff = max(policy.epsilon, SVD_FLOOR) * s[0]
    n = int(np.count_nonzero(s >= cutoff))
    # tail[i] = sum of squares of s[i:n]
    sq = s[:n] ** 2
    tail = np.cumsum(sq[::-1])[::-1]
    tail = np.append(tail, 0.0)
    chi_w = int(np.argmax(tail <= policy.w_max))
    return max(1, min(chi_w, policy.chi_max))


def truncated_svd(m: np.ndarray, policy: TruncationPolicy) -> SvdResult:
    """SVD of ``m`` truncated according to ``policy``.

    The discarded weight counts every dropped singular value, including those
    removed by the relative cutoff, so kept weight plus discarded weight
    equals the squared Frobenius norm of ``m``.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("truncated_svd needs a non-empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    u, s, vh = _svd(m)
    chi = choose_rank(s, policy)
    if chi == 0:
        raise ValueError("all singular values vanish; cannot split a zero state")
    discarded = float(np.sum(s[chi:] ** 2))
    return SvdResult(u[:, :chi], s[:chi], vh[:chi, :], discarded, chi)


def _orthogonalize(w: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    # two passes of classical Gram-Schmidt
    if not basis:
        return w
    q = np.array(basis)
    for _ in range(2):
        w = w - q.T @ (q.conj() @ w)
    return w


def krylov_expm_apply(apply_op: LinearOperator, v: np.ndarray, tau: complex,
                      cfg: KrylovConfig = KrylovConfig()) -> ExpmResult:
    """Approximate ``exp(tau * H) @ v`` in a Lanczos basis.

    ``apply_op`` must be Hermitian.  Convergence is declared once the usual
    a-posteriori estimate ``beta_k |[exp(tau T_k)]_{k,0}|`` drops below
    ``cfg.tolerance`` relative to ``|v|``; hitting the basis limit first
    returns the best estimate with ``converged=False``.
    """
    shape = v.shape
    v = np.asarray(v, dtype=complex).ravel()
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        raise ValueError("cannot exponentiate onto a zero vector")
    if tau == 0:
        return ExpmResult(v.copy().reshape(shape), True, 0.0, 0)

    kmax = min(cfg.max_basis_vectors, v.size)
    basis = [v / beta0]
    alphas: list[float] = []
    betas: list[float] = []
    converged = False
    err = np.inf
    coeffs = np.ones(1, dtype=complex)
    for j in range(kmax):
        w = apply_op(basis[j].reshape(shape)).ravel()
        alpha = float(np.vdot(basis[j], w).real)
        alphas.append(alpha)
        w = w - alpha * basis[j]
        if j > 0:
            w = w - betas[-1] * basis[j - 1]
        w = _orthogonalize(w, basis)
        beta = float(np.linalg.norm(w))

        theta, vecs = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        coeffs = vecs @ (np.exp(tau * theta) * vecs[0].conj())
        if beta < BREAKDOWN:
            converged, err = True, 0.0
            break
        err = beta * abs(coeffs[-1])
        if err <= cfg.tolerance:
            converged = True
            break
        if j + 1 < kmax:
            betas.append(beta)
            basis.append(w / beta)

    out = beta0 * (np.array(basis[: len(coeffs)]).T @ coeffs)
    return ExpmResult(out.reshape(shape), converged, float(err), len(coeffs))


def lanczos_ground_state(apply_op: LinearOperator, v0: np.ndarray,
                         cfg: KrylovConfig = KrylovConfig(), max_restarts: int = 200,
                         tol: float = 1e-8) -> EigResult:
    """Lowest eigenpair of a Hermitian operator by thick-restart Lanczos.

    The basis holds at most ``cfg.max_basis_vectors`` vectors.  On restart
    the lowest half of the Ritz vectors is kept and the residual of the
    lowest one extends the basis again.  Stops when
    ``|Hx - lambda x| <= tol |x|``.
    """
    shape = v0.shape
    v0 = np.asarray(v0, dtype=complex).ravel()
    nrm = np.linalg.norm(v0)
    if nrm == 0:
        raise ValueError("start vector is zero")
    n = v0.size
    kmax = min(cfg.max_basis_vectors, n)
    keep = max(1, kmax // 2)

    def op(x):
        return apply_op(x.reshape(shape)).ravel()

    basis = np.empty((n, kmax), dtype=complex)
    images = np.empty((n, kmax), dtype=complex)
    basis[:, 0] = v0 / nrm
    images[:, 0] = op(basis[:, 0])
    k = 1
    restarts = 0
    while True:
        h = basis[:, :k].conj().T @ images[:, :k]
        h = 0.5 * (h + h.conj().T)
        theta, s = np.linalg.eigh(h)
        x = basis[:, :k] @ s[:, 0]
        hx = images[:, :k] @ s[:, 0]
        r = hx - theta[0] * x
        res = float(np.linalg.norm(r))
        gap = float(theta[1] - theta[0]) if k > 1 else np.inf
        if res <= tol or k == n:
            return EigResult(float(theta[0]), x.reshape(shape), True, res, gap)
        if k == kmax:
            if restarts >= max_restarts:
                return EigResult(float(theta[0]), x.reshape(shape), False, res, gap)
            restarts += 1
            basis[:, :keep] = basis[:, :k] @ s[:, :keep]
            images[:, :keep] = images[:, :k] @ s[:, :keep]
            k = keep
        w = r
        for _ in range(2):
            w = w - basis[:, :k] @ (basis[:, :k].conj().T @ w)
        wn = np.linalg.norm(w)
        if wn < BREAKDOWN * max(1.0, abs(theta[0])):
            # residual lies in the span: invariant subspace reached
            return EigResult(float(theta[0]), x.reshape(shape), res <= tol, res, gap)
        basis[:, k] = w / wn
        images[:, k] = op(basis[:, k])
        k += 1
