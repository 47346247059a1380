"""Modified Smith predictor control law.

The controller keeps a classical Smith predictor state ``psi`` and adds a
correction ``zeta`` built from delayed plant and predictor samples, together
with an integrator ``eps`` that is reset to zero every ``T`` seconds::

    u(t)     = K x(t) + K psi(t)
    psi'(t)  = A psi(t) + B u(t) - B u(t - D) + L zeta(t)
    zeta(t)  = exp(A D) [x(t) - x(t - D) - psi(t - D) + eps(t - D)] - eps(t)
    eps'(t)  = A eps(t) + L zeta(t),        eps(m T) = 0

``zeta`` is evaluated algebraically at every step; its differential form
``zeta' = (A - L) zeta`` is a consequence checked by the residual tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import as_matrix, as_vector, hurwitz_certificate, spectral_abscissa

__all__ = [
    "PredictorGains",
    "ControllerState",
    "control_output",
    "correction_zeta",
    "controller_euler_step",
    "apply_reset",
    "GainCheck",
    "ValidationReport",
    "validate_gains",
]


@dataclass(frozen=True, eq=False)
class PredictorGains:
    """Feedback gain ``K`` (m x n), correction gain ``L`` (n x n), reset period ``T``."""

    K: np.ndarray
    L: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "K", as_matrix(self.K, "K"))
        object.__setattr__(self, "L", as_matrix(self.L, "L", square=True))
        T = float(self.T)
        if not math.isfinite(T) or T <= 0.0:
            raise ValueError(f"reset period T must be positive and finite, got {self.T!r}")
        object.__setattr__(self, "T", T)
        if self.K.shape[1] != self.L.shape[0]:
            raise DimensionError(f"K has {self.K.shape[1]} columns but L is {self.L.shape[0]}x{self.L.shape[0]}")

    def check_plant(self, plant):
        """Raise :class:`DimensionError` unless the gains fit ``plant``."""
        n, m = plant.n, plant.m
        if self.K.shape != (m, n):
            raise DimensionError(f"K must be {m}x{n} for this plant, got {self.K.shape}")
        if self.L.shape != (n, n):
            raise DimensionError(f"L must be {n}x{n} for this plant, got {self.L.shape}")


@dataclass(frozen=True, eq=False)
class ControllerState:
    psi: np.ndarray
    eps: np.ndarray
    zeta: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


def control_output(K, x, psi):
    """Return ``K (x + psi)``."""
    K = as_matrix(K, "K")
    x = as_vector(x, "x", K.shape[1])
    psi = as_vector(psi, "psi", K.shape[1])
    return K @ (x + psi)


def correction_zeta(expAD, x_now, x_del, psi_del, eps_del, eps_now):
    """Correction term ``exp(A D) (x_now - x_del - psi_del + eps_del) - eps_now``.

    ``expAD`` is the precomputed ``exp(A D)``; callers compute it once per run.
    """
    expAD = as_matrix(expAD, "expAD", square=True)
    n = expAD.shape[0]
    x_now, x_del, psi_del, eps_del, eps_now = (
        as_vector(v, name, n)
        for v, name in (
            (x_now, "x_now"), (x_del, "x_del"), (psi_del, "psi_del"),
            (eps_del, "eps_del"), (eps_now, "eps_now"),
        )
    )
    return expAD @ (x_now - x_del - psi_del + eps_del) - eps_now


def controller_euler_step(plant, gains, state, u_now, u_del, zeta, h):
    """Advance ``psi`` and ``eps`` by one explicit Euler step of length ``h``.

    Both updates read the pre-step state. The returned state carries the
    ``zeta`` that drove the step.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    A, B, L = plant.A, plant.B, gains.L
    n, m = plant.n, plant.m
    psi = as_vector(state.psi, "psi", n)
    eps = as_vector(state.eps, "eps", n)
    zeta = as_vector(zeta, "zeta", n)
    u_now = as_vector(u_now, "u_now", m)
    u_del = as_vector(u_del, "u_del", m)
    lz = L @ zeta
    psi_next = psi + h * (A @ psi + B @ u_now - B @ u_del + lz)
    eps_next = eps + h * (A @ eps + lz)
    return ControllerState(psi_next, eps_next, zeta)


def apply_reset(state, t, T, h):
    """Zero ``eps`` when ``t`` is on the reset grid ``m T`` (within ``h / 2``).

    Returns ``(new_state, fired)``.
    """
    if abs(t - round(t / T) * T) < h / 2:
        return ControllerState(state.psi, np.zeros_like(state.eps), state.zeta), True
    return state, False


@dataclass(frozen=True)
class GainCheck:
    name: str
    passed: bool
    value: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[GainCheck, ...]
    abscissa_sum: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        out = []
        for c in self.checks:
            out.append(f"gain_check.{c.name} = {'pass' if c.passed else 'fail'}")
            out.append(f"gain_check.{c.name}.value = {c.value!r}")
        return out


def validate_gains(plant, gains):
    """Check the design conditions on ``K``, ``L`` and ``T``.

    Four items, each reported with its computed number rather than raised:

    * ``F = A + B K`` is Hurwitz (Lyapunov certificate),
    * ``H = A - L`` is Hurwitz,
    * ``abscissa(H) + abscissa(A) < 0``,
    * ``T > D``.
    """
    gains.check_plant(plant)
    A = plant.A
    F = A + plant.B @ gains.K
    H = A - gains.L

    checks = []
    for name, M in (("F_hurwitz", F), ("H_hurwitz", H)):
        cert = hurwitz_certificate(M)
        absc = spectral_abscissa(M)
        detail = "Lyapunov certificate found" if cert.is_hurwitz else (
            "marginal (eigenvalue pair sums to zero)" if cert.marginal else "no positive definite solution")
        checks.append(GainCheck(name, cert.is_hurwitz, absc, detail))

    abs_h = spectral_abscissa(H)
    abs_a = spectral_abscissa(A)
    total = abs_h + abs_a
    checks.append(GainCheck("abscissa_sum", total < 0.0, total,
                            f"abscissa(H) = {abs_h:.6g}, abscissa(A) = {abs_a:.6g}"))
    checks.append(GainCheck("T_exceeds_D", gains.T > plant.D, gains.T - plant.D,
                            f"T = {gains.T:g}, D = {plant.D:g}"))
    return ValidationReport(tuple(checks), total)
