"""Fixed-step closed-loop simulation of a delayed plant under the predictor.

The plant ``x' = A x + B u(t - D)`` and the controller states are integrated
by explicit Euler with step ``h``. Delays are exact integer numbers of steps,
so ``D`` and ``T`` must be multiples of ``h``. Everything before ``t = 0``
(plant state, predictor state, integrator, input) is zero.

Within one step the order is fixed: reset ``eps`` on the grid ``m T``, read
the delayed samples, form ``zeta`` and ``u``, record, advance every state
from its pre-step value, and finally make the recorded values available to
the delay lines.
"""

from __future__ import annotations

import math
import os
import tempfile
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernel
from .errors import ConfigurationError, DimensionError, DivergenceError
from .linalg import as_matrix, as_vector, expm
from .predictor import (
    ControllerState,
    apply_reset,
    control_output,
    controller_euler_step,
    correction_zeta,
)

__all__ = [
    "Plant",
    "SimConfig",
    "DelayLine",
    "SimTrace",
    "MODES",
    "DIVERGENCE_LIMIT",
    "step_count",
    "simulate_closed_loop",
    "simulate_reference",
    "compute_derived_signals",
    "jump_indices",
    "IntervalResidual",
    "ResidualReport",
    "residual_report",
    "trace_header",
    "write_trace_csv",
]

MODES = ("modified", "classical", "open_loop")
DIVERGENCE_LIMIT = 1e12
_MODE_CODES = {
    "modified": _kernel.MODE_MODIFIED,
    "classical": _kernel.MODE_CLASSICAL,
    "open_loop": _kernel.MODE_OPEN_LOOP,
}


@dataclass(frozen=True, eq=False)
class Plant:
    """Linear plant ``x'(t) = A x(t) + B u(t - D)``.

    Controllability of ``(A, B)`` is not checked here.
    """

    A: np.ndarray
    B: np.ndarray
    D: float

    def __post_init__(self):
        A = as_matrix(self.A, "A", square=True)
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = as_matrix(B, "B")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B must have {A.shape[0]} rows, got {B.shape[0]}")
        D = float(self.D)
        if not math.isfinite(D) or D < 0.0:
            raise ValueError(f"delay D must be finite and non-negative, got {self.D!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Step ``h``, horizon ``t_end`` and initial plant state ``x0``."""

    h: float
    t_end: float
    x0: np.ndarray

    def __post_init__(self):
        h, t_end = float(self.h), float(self.t_end)
        if not math.isfinite(h) or h <= 0.0:
            raise ConfigurationError(f"step must be positive, got {self.h!r}", "sim.h")
        if not math.isfinite(t_end) or t_end < 0.0:
            raise ConfigurationError(f"horizon must be non-negative, got {self.t_end!r}", "sim.t_end")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "t_end", t_end)
        object.__setattr__(self, "x0", as_vector(self.x0, "x0"))


def step_count(value, h, name):
    """Return ``value / h`` as an int, or raise if it is not an integer to 1e-9."""
    ratio = value / h
    k = round(ratio)
    if abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigurationError(f"{value!r} is not an integer multiple of the step {h!r}", name)
    return int(k)


class DelayLine:
    """Fixed-depth FIFO of vectors.

    :meth:`push_and_read` returns the sample pushed ``depth`` calls earlier
    (the fill value while the line is still priming) and then stores the new
    sample. With ``depth == 0`` the pushed sample comes straight back.
    """

    def __init__(self, width, depth, fill=None):
        if depth < 0:
            raise ValueError("depth must be non-negative")
        self.width = int(width)
        self.depth = int(depth)
        fill = np.zeros(self.width) if fill is None else as_vector(fill, "fill", self.width)
        self._buffer = deque((fill.copy() for _ in range(self.depth)), maxlen=max(self.depth, 1))

    def push_and_read(self, sample):
        sample = np.array(sample, dtype=float).reshape(-1)
        if sample.size != self.width:
            raise DimensionError(f"sample has length {sample.size}, delay line width is {self.width}")
        if self.depth == 0:
            return sample
        out = self._buffer.popleft()
        self._buffer.append(sample.copy())
        return out


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Recorded signals, one row per step at ``t_k = k h``.

    ``z`` and ``xi`` stay ``None`` until :func:`compute_derived_signals`.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    psi: np.ndarray
    eps: np.ndarray
    zeta: np.ndarray
    h: float
    D: float
    T: float
    mode: str
    delay_steps: int
    reset_steps: int
    z: np.ndarray | None = None
    xi: np.ndarray | None = None
    diverged: bool = False
    identity_residual: float | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def m(self):
        return self.u.shape[1]


def _prepare(plant, gains, config, mode):
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}", "mode")
    gains.check_plant(plant)
    if config.x0.size != plant.n:
        raise ConfigurationError(f"x0 must have length {plant.n}, got {config.x0.size}", "sim.x0")
    h = config.h
    d = step_count(plant.D, h, "plant.D")
    p = step_count(gains.T, h, "gains.T")
    if p == 0:
        raise ConfigurationError("reset period must span at least one step", "gains.T")
    n_steps = int(math.floor(config.t_end / h + 1e-9))
    if config.t_end < plant.D + 2 * gains.T:
        warnings.warn("t_end < D + 2T: too short for the sampled-sequence checks", stacklevel=3)
    return d, p, n_steps


def simulate_closed_loop(plant, gains, config, mode="modified", guard=DIVERGENCE_LIMIT):
    """Run the closed loop with the compiled Euler kernel.

    Parameters
    ----------
    plant : Plant
    gains : PredictorGains
    config : SimConfig
    mode : {'modified', 'classical', 'open_loop'}
        ``classical`` drops the correction (``zeta = eps = 0``); ``open_loop``
        forces ``u = 0`` while the predictor states keep running.
    guard : float
        Divergence threshold on the norm of ``(x, psi, eps)``.

    Returns
    -------
    SimTrace
        Raw trace without derived signals.

    Raises
    ------
    ConfigurationError
        If ``D`` or ``T`` is not a multiple of ``h``.
    DivergenceError
        If the state norm exceeds ``guard``; ``err.trace`` holds the rows
        recorded up to and including the offending step.
    """
    d, p, n_steps = _prepare(plant, gains, config, mode)
    expAD = expm(plant.A, plant.D)
    X, U, PSI, EPS, ZETA, rows, diverged = _kernel.run_euler(
        plant.A, plant.B, gains.K, gains.L, expAD, config.x0.copy(), config.h,
        d, p, n_steps, _MODE_CODES[mode], float(guard),
    )
    t = np.arange(rows) * config.h
    trace = SimTrace(
        t=t, x=X[:rows], u=U[:rows], psi=PSI[:rows], eps=EPS[:rows], zeta=ZETA[:rows],
        h=config.h, D=plant.D, T=gains.T, mode=mode, delay_steps=d, reset_steps=p,
        diverged=bool(diverged),
    )
    if diverged:
        raise DivergenceError(
            f"state norm exceeded {guard:g} at t = {t[-1]:.6g} ({mode} mode)", trace=trace)
    return trace


def simulate_reference(plant, gains, config, mode="modified", guard=DIVERGENCE_LIMIT):
    """Slow pure-Python twin of :func:`simulate_closed_loop`.

    Built from :class:`DelayLine` and the per-step controller functions; used
    to cross-check the compiled kernel on short horizons.
    """
    d, p, n_steps = _prepare(plant, gains, config, mode)
    n, m, h = plant.n, plant.m, config.h
    expAD = expm(plant.A, plant.D)
    lines = {key: DelayLine(n, d) for key in ("x", "psi", "eps")}
    u_line = DelayLine(m, d)
    x = config.x0.copy()
    state = ControllerState.zeros(n)
    rows = {key: [] for key in ("x", "u", "psi", "eps", "zeta")}
    diverged = False
    for k in range(n_steps + 1):
        t = k * h
        if mode != "classical":
            state, _ = apply_reset(state, t, gains.T, h)
        x_del = lines["x"].push_and_read(x)
        psi_del = lines["psi"].push_and_read(state.psi)
        eps_del = lines["eps"].push_and_read(state.eps)
        if mode != "classical":
            zeta = correction_zeta(expAD, x, x_del, psi_del, eps_del, state.eps)
        else:
            zeta = np.zeros(n)
        u = np.zeros(m) if mode == "open_loop" else control_output(gains.K, x, state.psi)
        u_del = u_line.push_and_read(u)
        for key, value in (("x", x), ("u", u), ("psi", state.psi), ("eps", state.eps), ("zeta", zeta)):
            rows[key].append(np.array(value, dtype=float))
        if not np.linalg.norm(np.concatenate([x, state.psi, state.eps])) <= guard:
            diverged = True
            break
        if k == n_steps:
            break
        x_next = x + h * (plant.A @ x + plant.B @ u_del)
        stepped = controller_euler_step(plant, gains, state, u, u_del, zeta, h)
        if mode == "classical":
            stepped = ControllerState(stepped.psi, np.zeros(n), zeta)
        x, state = x_next, stepped
    count = len(rows["x"])
    trace = SimTrace(
        t=np.arange(count) * h, **{key: np.array(val) for key, val in rows.items()},
        h=h, D=plant.D, T=gains.T, mode=mode, delay_steps=d, reset_steps=p, diverged=diverged,
    )
    if diverged:
        raise DivergenceError(f"state norm exceeded {guard:g}", trace=trace)
    return trace


def _delayed(arr, d):
    """``arr`` shifted down by ``d`` rows with zero pre-history."""
    if d == 0:
        return arr
    out = np.zeros_like(arr)
    if d < arr.shape[0]:
        out[d:] = arr[:-d]
    return out


def compute_derived_signals(trace, plant):
    """Fill ``z = zeta + eps`` and ``xi(t) = x(t) - x(t - D) - psi(t - D)``.

    Also evaluates the identity ``xi = exp(-A D) z - eps(t - D)`` sample by
    sample and stores the largest residual scaled by ``1 + ||z||`` in
    ``identity_residual`` (expected below 1e-8).
    """
    d = trace.delay_steps
    z = trace.zeta + trace.eps
    xi = trace.x - _delayed(trace.x, d) - _delayed(trace.psi, d)
    expmAD = expm(plant.A, -plant.D)
    rhs = z @ expmAD.T - _delayed(trace.eps, d)
    if len(trace):
        resid = np.linalg.norm(xi - rhs, axis=1) / (1.0 + np.linalg.norm(z, axis=1))
        worst = float(resid.max())
    else:
        worst = 0.0
    return replace(trace, z=z, xi=xi, identity_residual=worst)


def jump_indices(trace):
    """Row indices where ``zeta`` or ``z`` may jump: ``m T`` and ``m T + D``."""
    count = len(trace)
    p, d = trace.reset_steps, trace.delay_steps
    jumps = set(range(0, count, p))
    jumps.update(k + d for k in range(0, count, p) if k + d < count)
    return sorted(jumps)


@dataclass(frozen=True)
class IntervalResidual:
    t_start: float
    t_stop: float
    zeta_fd: float
    z_fd: float
    flow: float
    z_max: float

    @property
    def flow_rel(self):
        return self.flow / self.z_max if self.z_max > 0 else 0.0


@dataclass(frozen=True)
class ResidualReport:
    """Per-interval and global maxima of the differential-identity residuals.

    ``zeta_fd``: ``|| d zeta/dt - (A - L) zeta ||`` by central differences,
    ``z_fd``: ``|| dz/dt - A z ||``, ``flow``: ``|| z(t) - exp(A (t - t_k)) z(t_k) ||``.
    """

    intervals: tuple[IntervalResidual, ...]
    zeta_fd: float
    z_fd: float
    flow: float
    flow_rel: float
    h: float

    def lines(self):
        return [
            f"residual.zeta_fd_max = {self.zeta_fd!r}",
            f"residual.z_fd_max = {self.z_fd!r}",
            f"residual.flow_max = {self.flow!r}",
            f"residual.flow_rel_max = {self.flow_rel!r}",
            f"residual.intervals = {len(self.intervals)}",
        ]


def residual_report(trace, plant, gains, skip=2):
    """Check ``zeta' = (A - L) zeta``, ``z' = A z`` and the flow map between jumps.

    The trace is split at the jump instants ``m T`` and ``m T + D``. Central
    differences skip ``skip`` samples next to each jump; the flow map is
    compared from the first sample of each interval.
    """
    if trace.z is None:
        trace = compute_derived_signals(trace, plant)
    h = trace.h
    H = plant.A - gains.L
    A = plant.A
    count = len(trace)
    bounds = jump_indices(trace) + [count]
    bounds = sorted(set(b for b in bounds if 0 <= b <= count))
    if bounds[0] != 0:
        bounds.insert(0, 0)
    longest = max(b - a for a, b in zip(bounds[:-1], bounds[1:]))
    flows = _kernel.power_stack(expm(A, h), longest)

    intervals = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        zeta = trace.zeta[a:b]
        z = trace.z[a:b]
        lo, hi = skip, (b - a) - skip - 1
        if hi > lo:
            dzeta = (zeta[lo + 1:hi + 1] - zeta[lo - 1:hi - 1]) / (2 * h)
            zeta_fd = float(np.linalg.norm(dzeta - zeta[lo:hi] @ H.T, axis=1).max())
            dz = (z[lo + 1:hi + 1] - z[lo - 1:hi - 1]) / (2 * h)
            z_fd = float(np.linalg.norm(dz - z[lo:hi] @ A.T, axis=1).max())
        else:
            zeta_fd = z_fd = 0.0
        exact = np.einsum("kij,j->ki", flows[: b - a], z[0])
        flow = float(np.linalg.norm(z - exact, axis=1).max())
        z_max = float(np.linalg.norm(z, axis=1).max())
        intervals.append(IntervalResidual(a * h, b * h, zeta_fd, z_fd, flow, z_max))

    return ResidualReport(
        intervals=tuple(intervals),
        zeta_fd=max(iv.zeta_fd for iv in intervals),
        z_fd=max(iv.z_fd for iv in intervals),
        flow=max(iv.flow for iv in intervals),
        flow_rel=max(iv.flow_rel for iv in intervals),
        h=h,
    )


def trace_header(n, m):
    cols = ["t"]
    for name, width in (("x", n), ("u", m), ("psi", n), ("eps", n), ("zeta", n), ("z", n), ("xi", n)):
        cols.extend(f"{name}{i + 1}" for i in range(width))
    return cols


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(trace, path, plant=None):
    """Write the trace as comma-separated values with 17 significant digits.

    Derived columns are computed on the fly when missing (requires ``plant``).
    The file is written to a temporary name and renamed into place.
    """
    if trace.z is None:
        if plant is None:
            raise ValueError("trace has no derived signals; pass plant to compute them")
        trace = compute_derived_signals(trace, plant)
    data = np.column_stack([trace.t, trace.x, trace.u, trace.psi, trace.eps, trace.zeta, trace.z, trace.xi])
    header = ",".join(trace_header(trace.n, trace.m))

    def write(fh):
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")

    _atomic_write(path, write)
