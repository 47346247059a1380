"""Scenario-level analysis and identity verification suites."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .linalg import expm, operator_norm
from .predictor import validate_gains
from .simulation import compute_derived_signals, residual_report, simulate_closed_loop
from .stability import (
    chi_decay_slope,
    discrete_map,
    lemma1_residual,
    lyapunov_certificate_discrete,
    lyapunov_sequence_check,
    xi_recursion_check,
    z_envelope_check,
)

__all__ = ["Check", "analysis_lines", "verify_scenario", "format_value"]

XI_RECURSION_TOL = 5e-2
FLOW_REL_TOL = 1e-3
IDENTITY_TOL = 1e-8
LEMMA1_TOL = 1e-8


def format_value(value):
    if isinstance(value, np.ndarray):
        return json.dumps(value.tolist())
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Check:
    name: str
    status: str  # "pass", "fail" or "n/a"
    value: float | None = None
    limit: float | None = None
    note: str = ""

    @property
    def ok(self):
        return self.status != "fail"

    def lines(self):
        out = [f"check.{self.name} = {self.status}"]
        if self.value is not None:
            out.append(f"check.{self.name}.value = {format_value(float(self.value))}")
        if self.limit is not None:
            out.append(f"check.{self.name}.limit = {format_value(float(self.limit))}")
        if self.note:
            out.append(f"check.{self.name}.note = {self.note}")
        return out


def _verdict(ok):
    return "pass" if ok else "fail"


def analysis_lines(scenario, quad_steps=10_000):
    """``key = value`` lines for the analyze command; raises DomainError if T <= D."""
    plant, gains = scenario.plant, scenario.gains
    report = validate_gains(plant, gains)
    dmap = discrete_map(plant, gains)
    cert = lyapunov_certificate_discrete(dmap)
    lines = [f"D = {format_value(plant.D)}", f"T = {format_value(gains.T)}"]
    lines += report.lines()
    lines.append(f"gain_check.all = {_verdict(report.passed)}")
    lines += [
        f"G1 = {format_value(dmap.G1)}",
        f"G2 = {format_value(dmap.G2)}",
        f"rho = {format_value(dmap.rho)}",
        f"alpha = {format_value(cert.alpha)}",
        f"beta = {format_value(cert.beta)}",
        f"spectral_stable = {format_value(bool(dmap.rho < 1.0))}",
        f"lyapunov_valid = {format_value(bool(cert.valid))}",
        f"lemma1_residual = {format_value(lemma1_residual(plant.A, gains.L, plant.D, quad_steps))}",
        "note = spectral test is exact for the sampled sequence; the Lyapunov test is sufficient only",
    ]
    return lines


def verify_scenario(scenario, quad_steps=10_000):
    """Simulate the modified loop and run every identity and decay check.

    Returns ``(checks, trace)``. Raises :class:`ConfigurationError` when the
    horizon is shorter than ``D + 3 T`` and lets :class:`DivergenceError`
    propagate.
    """
    plant, gains, sim = scenario.plant, scenario.gains, scenario.sim
    need = plant.D + 3 * gains.T
    if sim.t_end < need - 1e-9 * need:
        raise ConfigurationError(f"verification needs t_end >= D + 3T = {need:g}", "sim.t_end")
    checks = []

    report = validate_gains(plant, gains)
    for c in report.checks:
        checks.append(Check(f"gains.{c.name}", _verdict(c.passed), c.value, None, c.detail))

    trace = compute_derived_signals(simulate_closed_loop(plant, gains, sim, "modified"), plant)
    checks.append(Check("xi_identity", _verdict(trace.identity_residual <= IDENTITY_TOL),
                        trace.identity_residual, IDENTITY_TOL, "relative to 1 + ||z||"))

    h = sim.h
    H = plant.A - gains.L
    rr = residual_report(trace, plant, gains)
    zeta_max = float(np.linalg.norm(trace.zeta, axis=1).max())
    z_max = float(np.linalg.norm(trace.z, axis=1).max())
    zeta_limit = h * operator_norm(H) ** 2 * zeta_max
    z_limit = h * operator_norm(plant.A) ** 2 * z_max
    checks.append(Check("zeta_dynamics", _verdict(rr.zeta_fd <= zeta_limit), rr.zeta_fd, zeta_limit,
                        f"C = residual / h = {rr.zeta_fd / h:.6g}"))
    checks.append(Check("z_dynamics", _verdict(rr.z_fd <= z_limit), rr.z_fd, z_limit,
                        f"C = residual / h = {rr.z_fd / h:.6g}"))
    checks.append(Check("flow_map", _verdict(rr.flow_rel <= FLOW_REL_TOL), rr.flow_rel, FLOW_REL_TOL,
                        "per interval, relative to max ||z||"))

    dmap = discrete_map(plant, gains)
    xi = xi_recursion_check(trace, dmap)
    checks.append(Check("xi_recursion", _verdict(xi.max_residual <= XI_RECURSION_TOL),
                        xi.max_residual, XI_RECURSION_TOL, "relative to max ||xi_m||"))
    slope = chi_decay_slope(xi)
    checks.append(Check("xi_decay", _verdict(bool(slope < 0)), slope, 0.0,
                        "least-squares slope of ln ||chi(m)|| per second"))

    cert = lyapunov_certificate_discrete(dmap)
    seq = lyapunov_sequence_check(xi, cert)
    if seq.applicable:
        checks.append(Check("lyapunov_sequence", _verdict(seq.passed),
                            float(seq.ratios.max()) if seq.ratios.size else 0.0, cert.beta))
    else:
        checks.append(Check("lyapunov_sequence", "n/a", cert.alpha, 1.0, seq.message))

    env = z_envelope_check(trace, plant)
    checks.append(Check("z_envelope", _verdict(env.passed), env.worst_ratio, 1.0,
                        f"E = {env.envelope:.6g}"))

    closed = expm(H, -plant.D) @ expm(plant.A, plant.D) - np.eye(plant.n)
    l1 = lemma1_residual(plant.A, gains.L, plant.D, quad_steps)
    l1_limit = LEMMA1_TOL * (1.0 + operator_norm(closed))
    checks.append(Check("lemma1", _verdict(l1 <= l1_limit), l1, l1_limit))
    return checks, trace
