"""Dense real linear algebra kernels.

Everything here works on small double-precision matrices (n up to about 24)
and is written without calling into LAPACK so that every numerical result
has a documented error floor: the matrix exponential, LU solves with partial
pivoting, Lyapunov-based Hurwitz certificates, the spectral radius by
Gelfand's formula, the spectral abscissa and the induced 2-norm.

All functions are pure and accept anything ``numpy.asarray`` understands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RangeError, SingularMatrixError

__all__ = [
    "as_matrix",
    "as_vector",
    "expm",
    "lu_factor",
    "lu_solve",
    "solve_linear",
    "cholesky_pivoted",
    "HurwitzCertificate",
    "hurwitz_certificate",
    "spectral_radius",
    "spectral_abscissa",
    "operator_norm",
]

_EPS = np.finfo(float).eps


def as_matrix(value, name="matrix", square=False):
    """Return ``value`` as a finite 2-D float array.

    Raises
    ------
    DimensionError
        If the input is not two-dimensional (or not square when requested).
    ValueError
        If any entry is NaN or infinite.
    """
    arr = np.array(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_vector(value, name="vector", dim=None):
    """Return ``value`` as a finite 1-D float array, optionally of length ``dim``."""
    arr = np.array(value, dtype=float)
    if arr.ndim > 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr = arr.reshape(-1)
    if arr.size == 0:
        raise DimensionError(f"{name} must be non-empty")
    if dim is not None and arr.size != dim:
        raise DimensionError(f"{name} must have length {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# Matrix exponential
# ---------------------------------------------------------------------------

# Scaled argument norm bound; Taylor terms then fall below eps by degree ~16.
_TAYLOR_RADIUS = 0.5
_TAYLOR_MAX_TERMS = 40


def expm(M, t=1.0):
    """Matrix exponential ``exp(M * t)`` by scaling and squaring.

    The argument is scaled by ``2**-s`` until its 1-norm is at most 1/2, the
    Taylor series is summed until the next term is below machine precision
    relative to the partial sum, and the result is squared ``s`` times.

    Parameters
    ----------
    M : array_like
        Square matrix.
    t : float
        Finite scalar multiplier; negative values give inverse flows.

    Returns
    -------
    ndarray
        ``exp(M t)`` with relative error around 1e-14 for ``||M t|| <= 50``.

    Raises
    ------
    DimensionError
        If ``M`` is not square.
    RangeError
        If the exponential overflows double precision.
    """
    M = as_matrix(M, "M", square=True)
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    n = M.shape[0]
    X = M * t
    norm1 = np.abs(X).sum(axis=0).max()
    if norm1 == 0.0:
        return np.eye(n)
    s = max(0, int(math.ceil(math.log2(norm1 / _TAYLOR_RADIUS))))
    X = X / (2.0 ** s)

    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _TAYLOR_MAX_TERMS):
        term = term @ X / k
        result = result + term
        if np.abs(term).max() <= _EPS * np.abs(result).max() * 0.5:
            break

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            result = result @ result
    if not np.all(np.isfinite(result)):
        raise RangeError(f"exp(M t) overflows double precision (||M t||_1 = {norm1:.6g})")
    return result


# ---------------------------------------------------------------------------
# Linear solves
# ---------------------------------------------------------------------------


def lu_factor(A):
    """LU factorization with partial (row) pivoting.

    Returns ``(LU, perm)`` where the strict lower triangle of ``LU`` holds the
    unit-lower factor, the upper triangle holds ``U`` and ``A[perm] = L U``.

    Raises
    ------
    SingularMatrixError
        When a pivot is below ``n * eps * max|A|``; ``pivot`` is its column.
    """
    LU = as_matrix(A, "A", square=True).copy()
    n = LU.shape[0]
    perm = np.arange(n)
    scale = np.abs(LU).max()
    tol = n * _EPS * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if abs(LU[p, k]) <= tol or scale == 0.0:
            raise SingularMatrixError(k)
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        LU[k + 1:, k] /= LU[k, k]
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm


def lu_solve(factors, b):
    """Solve ``A x = b`` from :func:`lu_factor` output; ``b`` may be 1-D or 2-D."""
    LU, perm = factors
    n = LU.shape[0]
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, expected {n}")
    y = b[perm].copy()
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def solve_linear(A, b):
    """Solve the square system ``A x = b`` by Gaussian elimination with partial pivoting.

    >>> solve_linear([[0.0, 1.0], [1.0, 0.0]], [7.0, 9.0])
    array([9., 7.])
    """
    A = as_matrix(A, "A", square=True)
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2):
        raise DimensionError("b must be a vector or a matrix of right-hand sides")
    if not np.all(np.isfinite(b)):
        raise ValueError("b has non-finite entries")
    return lu_solve(lu_factor(A), b)


def cholesky_pivoted(S, rtol=None):
    """Diagonally pivoted Cholesky factorization of a symmetric matrix.

    Returns ``(R, perm)`` with ``S[perm][:, perm] = R.T @ R`` or ``None`` when
    a pivot is not positive (relative to ``rtol * max diag``), i.e. when ``S``
    is not numerically positive definite.
    """
    W = as_matrix(S, "S", square=True).copy()
    n = W.shape[0]
    if rtol is None:
        rtol = n * _EPS
    perm = np.arange(n)
    R = np.zeros_like(W)
    dmax = np.abs(np.diag(W)).max()
    for k in range(n):
        p = k + int(np.argmax(np.diag(W)[k:]))
        if W[p, p] <= rtol * dmax or dmax == 0.0:
            return None
        if p != k:
            W[[k, p]] = W[[p, k]]
            W[:, [k, p]] = W[:, [p, k]]
            R[:k, [k, p]] = R[:k, [p, k]]
            perm[[k, p]] = perm[[p, k]]
        R[k, k] = math.sqrt(W[k, k])
        R[k, k + 1:] = W[k, k + 1:] / R[k, k]
        W[k + 1:, k + 1:] -= np.outer(R[k, k + 1:], R[k, k + 1:])
    return R, perm


# ---------------------------------------------------------------------------
# Stability tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HurwitzCertificate:
    """Outcome of the Lyapunov test ``M^T P + P M = -I``.

    ``P`` is set only when ``is_hurwitz`` is true. ``marginal`` flags a
    singular Kronecker system, which happens when two eigenvalues of ``M``
    sum to zero.
    """

    is_hurwitz: bool
    P: np.ndarray | None = None
    marginal: bool = False


def hurwitz_certificate(M):
    """Certify that every eigenvalue of ``M`` has negative real part.

    Solves the Lyapunov equation ``M^T P + P M = -I`` through its vectorized
    ``n^2 x n^2`` form and accepts iff the symmetric solution is positive
    definite. Intended for ``n <= 12``.
    """
    M = as_matrix(M, "M", square=True)
    n = M.shape[0]
    if n > 12:
        raise DimensionError(f"hurwitz_certificate supports n <= 12, got {n}")
    eye = np.eye(n)
    # Row-major vec: vec(M^T P) = (M^T kron I) vec(P), vec(P M) = (I kron M^T) vec(P).
    kron = np.kron(M.T, eye) + np.kron(eye, M.T)
    try:
        p = solve_linear(kron, -eye.reshape(-1))
    except SingularMatrixError:
        return HurwitzCertificate(False, None, marginal=True)
    P = p.reshape(n, n)
    P = 0.5 * (P + P.T)
    if cholesky_pivoted(P) is None:
        return HurwitzCertificate(False)
    return HurwitzCertificate(True, P)


def spectral_radius(M, rtol=1e-8, max_squarings=64):
    """Spectral radius via Gelfand's formula with repeated squaring.

    ``ln rho`` is accumulated as ``ln||M|| + sum_j ln(c_j) / 2**j`` where
    ``c_j`` is the Frobenius norm of the squared, renormalized iterate, so
    ``M**(2**j)`` is never formed unscaled. Iteration stops once successive
    estimates agree to ``rtol`` (relative).
    """
    M = as_matrix(M, "M", square=True)
    norm = np.linalg.norm(M)
    if norm == 0.0:
        return 0.0
    B = M / norm
    log_rho = math.log(norm)
    estimate = norm
    for j in range(1, max_squarings + 1):
        B = B @ B
        c = np.linalg.norm(B)
        if c == 0.0:
            return 0.0
        B /= c
        log_rho += math.log(c) / 2.0 ** j
        previous, estimate = estimate, math.exp(log_rho)
        if abs(estimate - previous) <= rtol * estimate:
            break
    return estimate


def spectral_abscissa(M):
    """Largest real part of the eigenvalues, as ``ln rho(exp(M))``.

    Absolute accuracy is about 1e-6; ``||M||`` should stay moderate so that
    ``exp(M)`` is representable.
    """
    rho = spectral_radius(expm(M, 1.0))
    if rho == 0.0:
        return -math.inf
    return math.log(rho)


def operator_norm(M, max_iter=1000):
    """Induced 2-norm (largest singular value).

    Power iteration on ``M^T M``. The Gram matrix is first raised to a large
    power by normalized repeated squaring so that nearly equal singular
    values still separate; the dominant direction is then read off from an
    all-ones start and from a fixed alternating start, and the better
    Rayleigh quotient is polished with plain power steps.
    """
    M = as_matrix(M, "M")
    G = M.T @ M
    gnorm = np.linalg.norm(G)
    if gnorm == 0.0:
        return 0.0
    n = G.shape[0]
    S = G / gnorm
    for _ in range(40):
        S2 = S @ S
        c = np.linalg.norm(S2)
        if c == 0.0:
            break
        S2 /= c
        done = np.abs(S2 - S).max() <= 4 * _EPS
        S = S2
        if done:
            break

    starts = (np.ones(n), np.where(np.arange(n) % 2 == 0, 1.0, -0.5) + np.arange(n) / n)
    best = 0.0
    best_v = None
    for start in starts:
        v = S @ start
        vn = np.linalg.norm(v)
        if vn == 0.0:
            v, vn = start, np.linalg.norm(start)
        v = v / vn
        lam = float(v @ G @ v)
        if lam > best:
            best, best_v = lam, v
    if best_v is None:
        return 0.0

    v, lam = best_v, best
    for _ in range(max_iter):
        w = G @ v
        wn = np.linalg.norm(w)
        if wn == 0.0:
            break
        v = w / wn
        new = float(v @ G @ v)
        if abs(new - lam) <= 2 * _EPS * new:
            lam = max(lam, new)
            break
        lam = new
    return math.sqrt(max(lam, 0.0))
