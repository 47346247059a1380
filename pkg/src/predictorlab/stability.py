"""Sampled-sequence stability analysis of the reset predictor.

Sampling ``xi(t) = x(t) - x(t - D) - psi(t - D)`` at ``t = m T + D`` gives a
second-order linear recursion

    xi[m+1] = -G1 xi[m] - G2 xi[m-1]
    G1 = -exp(H (T - D)) exp(A D)
    G2 =  exp(H T) (exp(-H D) exp(A D) - I) exp(A T),     H = A - L

whose block companion matrix ``M = [[0, I], [-G2, -G1]]`` decides stability
exactly (``rho(M) < 1``). The quadratic form ``V = chi^T diag(I, 2I) chi`` with
``chi[m] = (xi[m-1], xi[m])`` gives the sufficient test ``||N(T)|| < 1`` where
``N = 2 [[G2^T G2, G2^T G1], [G1^T G2, G1^T G1]]``.

``H`` and ``A`` do not commute, so every product below keeps the order shown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .linalg import as_matrix, expm, operator_norm, spectral_radius
from .simulation import _atomic_write, _delayed

__all__ = [
    "DiscreteMap",
    "discrete_map",
    "lemma1_integral",
    "lemma1_residual",
    "LyapunovCertificate",
    "lyapunov_certificate_discrete",
    "SweepRow",
    "SweepResult",
    "find_min_stable_T",
    "write_sweep_csv",
    "XiSequence",
    "xi_recursion_check",
    "chi_decay_slope",
    "LyapunovSequenceReport",
    "lyapunov_sequence_check",
    "EnvelopeReport",
    "z_envelope_check",
]


@dataclass(frozen=True, eq=False)
class DiscreteMap:
    G1: np.ndarray
    G2: np.ndarray
    M: np.ndarray
    rho: float
    T: float
    D: float


def discrete_map(plant, gains, T=None):
    """Recursion coefficients and companion matrix for reset period ``T``.

    ``T`` defaults to ``gains.T``.

    Raises
    ------
    DomainError
        If ``T <= D``; the recursion needs the reset period to exceed the delay.
    """
    T = gains.T if T is None else float(T)
    D = plant.D
    if not T > D:
        raise DomainError(f"reset period T = {T:g} must exceed the delay D = {D:g} (T0 > D)")
    A = plant.A
    H = A - gains.L
    n = plant.n
    eye = np.eye(n)
    e_AD = expm(A, D)
    G1 = -expm(H, T - D) @ e_AD
    G2 = expm(H, T) @ (expm(H, -D) @ e_AD - eye) @ expm(A, T)
    M = np.block([[np.zeros((n, n)), eye], [-G2, -G1]])
    return DiscreteMap(G1=G1, G2=G2, M=M, rho=spectral_radius(M), T=T, D=D)


def lemma1_integral(A, L, s_max, quad_steps=10_000):
    """Composite Simpson approximation of ``int_0^s_max exp(-H s) L exp(A s) ds``.

    Node values are generated by stepping ``exp(-H ds)`` and ``exp(A ds)``.
    """
    A = as_matrix(A, "A", square=True)
    L = as_matrix(L, "L", square=True)
    if quad_steps < 2 or quad_steps % 2:
        raise ValueError("quad_steps must be an even number of panels")
    H = A - L
    ds = s_max / quad_steps
    step_h, step_a = expm(H, -ds), expm(A, ds)
    left, right = np.eye(A.shape[0]), np.eye(A.shape[0])
    total = np.zeros_like(A)
    for i in range(quad_steps + 1):
        weight = 1.0 if i in (0, quad_steps) else (4.0 if i % 2 else 2.0)
        total += weight * (left @ L @ right)
        left = left @ step_h
        right = right @ step_a
    return total * ds / 3.0


def lemma1_residual(A, L, s_max, quad_steps=10_000):
    """Distance between the Simpson integral and its closed form.

    The antiderivative of ``exp(-H s) L exp(A s)`` with ``H = A - L`` is
    ``+exp(-H s) exp(A s)``: differentiating gives
    ``exp(-H s) (A - H) exp(A s) = exp(-H s) L exp(A s)``. So the integral
    from 0 to ``s_max`` equals ``exp(-H s_max) exp(A s_max) - I``; the return
    value is the 2-norm of the difference.
    """
    if quad_steps < 1000:
        raise ValueError("quad_steps must be at least 1000")
    A = as_matrix(A, "A", square=True)
    L = as_matrix(L, "L", square=True)
    H = A - L
    closed = expm(H, -s_max) @ expm(A, s_max) - np.eye(A.shape[0])
    return operator_norm(lemma1_integral(A, L, s_max, quad_steps) - closed)


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    N: np.ndarray
    alpha: float
    beta: float
    P: np.ndarray
    valid: bool


def lyapunov_certificate_discrete(dmap):
    """Sufficient decrease test for ``V = chi^T diag(I, 2I) chi``.

    ``alpha = ||N||``; when ``alpha < 1`` every step satisfies
    ``V[m+1] <= beta V[m]`` with ``beta = (1 + alpha) / 2``.
    """
    G1, G2 = dmap.G1, dmap.G2
    n = G1.shape[0]
    N = 2.0 * np.block([[G2.T @ G2, G2.T @ G1], [G1.T @ G2, G1.T @ G1]])
    alpha = operator_norm(N)
    P = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), 2.0 * np.eye(n)]])
    return LyapunovCertificate(N=N, alpha=alpha, beta=(1.0 + alpha) / 2.0, P=P, valid=alpha < 1.0)


@dataclass(frozen=True)
class SweepRow:
    T: float
    rho: float
    alpha: float
    beta: float
    spectral_stable: bool
    lyapunov_valid: bool


@dataclass(frozen=True)
class SweepResult:
    """Grid sweep over ``T``; ``T0`` is ``None`` when no tail of the grid qualifies.

    The "for all T >= T0" requirement is only checked on the grid points.
    """

    T0: float | None
    criterion: str
    table: tuple[SweepRow, ...]


def _grid(T_lo, T_hi, T_step):
    count = int(math.floor((T_hi - T_lo) / T_step + 1e-9)) + 1
    return [T_lo + i * T_step for i in range(count)]


def find_min_stable_T(plant, gains, T_lo, T_hi, T_step, criterion="spectral"):
    """Smallest grid ``T`` from which the criterion holds on the rest of the grid.

    ``criterion`` is ``"spectral"`` (``rho(M) < 1``) or ``"lyapunov"``
    (``alpha < 1``). Both quantities are tabulated either way.
    """
    if criterion not in ("spectral", "lyapunov"):
        raise ValueError(f"criterion must be 'spectral' or 'lyapunov', got {criterion!r}")
    if not T_lo > plant.D:
        raise DomainError(f"T_lo = {T_lo:g} must exceed the delay D = {plant.D:g} (T0 > D)")
    if not T_step > 0 or not T_hi >= T_lo:
        raise DomainError(f"invalid grid [{T_lo:g}, {T_hi:g}] with step {T_step:g}")

    rows = []
    for T in _grid(T_lo, T_hi, T_step):
        dmap = discrete_map(plant, gains, T)
        cert = lyapunov_certificate_discrete(dmap)
        rows.append(SweepRow(T, dmap.rho, cert.alpha, cert.beta, dmap.rho < 1.0, cert.valid))

    ok = [r.spectral_stable if criterion == "spectral" else r.lyapunov_valid for r in rows]
    T0 = None
    for i in range(len(rows) - 1, -1, -1):
        if not ok[i]:
            break
        T0 = rows[i].T
    return SweepResult(T0=T0, criterion=criterion, table=tuple(rows))


def write_sweep_csv(result, path):
    def write(fh):
        fh.write("T,rho,alpha,beta,spectral_stable,lyapunov_valid\n")
        for r in result.table:
            fh.write(f"{r.T:.17g},{r.rho:.17g},{r.alpha:.17g},{r.beta:.17g},"
                     f"{str(r.spectral_stable).lower()},{str(r.lyapunov_valid).lower()}\n")

    _atomic_write(path, write)


@dataclass(frozen=True, eq=False)
class XiSequence:
    """Samples ``xi[m] = xi(m T + D)`` for ``m = start, start + 1, ...``.

    ``residuals[i]`` belongs to ``m = start + 1 + i`` and is
    ``||xi[m+1] + G1 xi[m] + G2 xi[m-1]|| / max_k ||xi[k]||``.
    """

    samples: np.ndarray
    times: np.ndarray
    start: int
    residuals: np.ndarray

    @property
    def max_residual(self):
        return float(self.residuals.max()) if self.residuals.size else 0.0


def _xi_samples(trace):
    d, p = trace.delay_steps, trace.reset_steps
    xi = trace.xi if trace.xi is not None else (
        trace.x - _delayed(trace.x, d) - _delayed(trace.psi, d))
    idx = np.arange(d, len(trace), p)
    return xi[idx], trace.t[idx]


def xi_recursion_check(trace, dmap):
    """Extract the sampled sequence from a simulation and test the recursion on it.

    Raises
    ------
    ConfigurationError
        If fewer than three samples are available (``t_end < D + 2 T``).
    """
    if abs(trace.T - dmap.T) > 1e-9 * dmap.T or abs(trace.D - dmap.D) > 1e-9 * max(1.0, dmap.D):
        raise ValueError("trace and discrete map were built for different (D, T)")
    samples, times = _xi_samples(trace)
    if samples.shape[0] < 3:
        need = trace.D + 2 * trace.T
        raise ConfigurationError(
            f"horizon too short for the recursion check: need t_end >= {need:g}", "sim.t_end")
    scale = np.linalg.norm(samples, axis=1).max()
    err = samples[2:] + samples[1:-1] @ dmap.G1.T + samples[:-2] @ dmap.G2.T
    resid = np.linalg.norm(err, axis=1) / scale if scale > 0 else np.zeros(err.shape[0])
    return XiSequence(samples=samples, times=times, start=0, residuals=resid)


def chi_decay_slope(xi):
    """Least-squares slope of ``ln ||chi[m]||`` against the sample time ``m T + D``.

    Negative means exponential decay. ``nan`` if a stacked sample is zero.
    """
    s = xi.samples
    chi = np.linalg.norm(np.hstack([s[:-1], s[1:]]), axis=1)
    if np.any(chi == 0):
        return math.nan
    t = xi.times[1:]
    return float(np.polyfit(t, np.log(chi), 1)[0])


@dataclass(frozen=True, eq=False)
class LyapunovSequenceReport:
    applicable: bool
    passed: bool | None
    V: np.ndarray
    ratios: np.ndarray
    beta: float
    message: str


def lyapunov_sequence_check(xi, cert, rtol_abs=1e-9):
    """Test ``V[m+1] <= beta V[m] + rtol_abs * V[first]`` along a sampled sequence.

    Only meaningful when the certificate is valid; otherwise the report says
    so and ``passed`` is ``None``.
    """
    s = xi.samples
    n = s.shape[1]
    chi = np.hstack([s[:-1], s[1:]])
    V = np.einsum("ki,ij,kj->k", chi, cert.P, chi) if chi.size else np.zeros(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(V[:-1] > 0, V[1:] / V[:-1], 0.0)
    if not cert.valid:
        return LyapunovSequenceReport(False, None, V, ratios, cert.beta, "condition not applicable")
    if cert.P.shape[0] != 2 * n:
        raise ValueError("certificate dimension does not match the sequence")
    tol = rtol_abs * (V[0] if V.size else 0.0)
    ok = bool(np.all(V[1:] <= cert.beta * V[:-1] + tol))
    return LyapunovSequenceReport(True, ok, V, ratios, cert.beta,
                                  "decrease holds" if ok else "decrease violated")


@dataclass(frozen=True)
class EnvelopeReport:
    envelope: float
    passed: bool
    worst_ratio: float
    intervals: int


def z_envelope_check(trace, plant, T=None, grid=1000, rtol=1e-6):
    """Bound ``||z(t)|| <= E ||z(m T + D)||`` on every ``[m T + D, m T + D + T)``.

    ``E = max_s ||exp(A s)||`` over ``grid + 1`` equally spaced points of
    ``[0, T]``. ``worst_ratio`` is the largest ``||z(t)|| / (E ||z(m T + D)||)``.
    """
    if grid < 100:
        raise ValueError("grid must have at least 100 points")
    T = trace.T if T is None else T
    z = trace.z if trace.z is not None else trace.zeta + trace.eps
    envelope = max(operator_norm(expm(plant.A, s)) for s in np.linspace(0.0, T, grid + 1))
    norms = np.linalg.norm(z, axis=1)
    tol_abs = 1e-12 * (1.0 + (norms.max() if norms.size else 0.0))
    d, p = trace.delay_steps, trace.reset_steps
    passed = True
    worst = 0.0
    count = 0
    for start in range(d, len(trace), p):
        seg = norms[start:start + p]
        bound = envelope * norms[start]
        if np.any(seg > bound * (1.0 + rtol) + tol_abs):
            passed = False
        if bound > 0:
            worst = max(worst, float(seg.max() / bound))
        count += 1
    return EnvelopeReport(envelope, passed, worst, count)
