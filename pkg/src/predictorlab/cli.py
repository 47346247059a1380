"""Command-line front end.

    predictorlab simulate|analyze|sweep|verify --scenario PATH --out DIR [options]

Exit codes: 0 success, 1 I/O failure, 2 divergence, 3 configuration or
domain error, 4 verification ran but at least one check failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigurationError, DivergenceError, DomainError, PredictorLabError
from .scenario import parse_scenario
from .simulation import (
    MODES,
    _atomic_write,
    compute_derived_signals,
    residual_report,
    simulate_closed_loop,
    write_trace_csv,
)
from .stability import find_min_stable_T, write_sweep_csv
from .verification import analysis_lines, format_value, verify_scenario

EXIT_OK = 0
EXIT_IO = 1
EXIT_DIVERGED = 2
EXIT_CONFIG = 3
EXIT_CHECKS_FAILED = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_lines(path, lines):
    _atomic_write(path, lambda fh: fh.write("\n".join(lines) + "\n"))


def _simulation_lines(trace, plant, gains):
    lines = [
        f"mode = {trace.mode}",
        f"h = {format_value(trace.h)}",
        f"steps = {len(trace)}",
        f"t_last = {format_value(float(trace.t[-1]))}",
        f"diverged = {format_value(trace.diverged)}",
        f"xi_identity_residual = {format_value(trace.identity_residual)}",
    ]
    if len(trace) >= 3:
        lines += residual_report(trace, plant, gains).lines()
    return lines


def cmd_simulate(scenario, out, mode=None):
    mode = mode or scenario.mode
    plant, gains = scenario.plant, scenario.gains
    code = EXIT_OK
    try:
        trace = simulate_closed_loop(plant, gains, scenario.sim, mode)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        trace = exc.trace
        code = EXIT_DIVERGED
    trace = compute_derived_signals(trace, plant)
    write_trace_csv(trace, out / "trace.csv")
    _write_lines(out / "residuals.txt", _simulation_lines(trace, plant, gains))
    print(f"wrote {out / 'trace.csv'} ({len(trace)} rows)")
    return code


def cmd_analyze(scenario, out):
    lines = analysis_lines(scenario)
    _write_lines(out / "analysis.txt", lines)
    for line in lines:
        if line.startswith(("rho", "alpha", "spectral_stable", "lyapunov_valid", "gain_check.all")):
            print(line)
    return EXIT_OK


def cmd_sweep(scenario, out, t_lo, t_hi, t_step, criterion):
    if None in (t_lo, t_hi, t_step):
        raise ConfigurationError("sweep needs --t-lo, --t-hi and --t-step")
    result = find_min_stable_T(scenario.plant, scenario.gains, t_lo, t_hi, t_step, criterion)
    write_sweep_csv(result, out / "sweep.csv")
    if result.T0 is None:
        print("T0 = not found on grid")
    else:
        print(f"T0 = {format_value(result.T0)}")
    print(f"criterion = {criterion} (checked on grid points only)")
    return EXIT_OK


def cmd_verify(scenario, out):
    try:
        checks, _ = verify_scenario(scenario)
    except DivergenceError as exc:
        _write_lines(out / "verify.txt", ["simulation = diverged", f"detail = {exc}", "all = fail"])
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    lines = []
    for c in checks:
        lines += c.lines()
    ok = all(c.ok for c in checks)
    lines.append(f"all = {'pass' if ok else 'fail'}")
    _write_lines(out / "verify.txt", lines)
    for c in checks:
        print(f"{c.status:4s}  {c.name}")
    return EXIT_OK if ok else EXIT_CHECKS_FAILED


def build_parser():
    parser = _Parser(prog="predictorlab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=("simulate", "analyze", "sweep", "verify"))
    parser.add_argument("--scenario", required=True,
                        help="scenario JSON file, or a bundled name (paper_fig1, paper_fig2)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--mode", choices=MODES, help="override the scenario's mode (simulate)")
    parser.add_argument("--t-lo", type=float)
    parser.add_argument("--t-hi", type=float)
    parser.add_argument("--t-step", type=float)
    parser.add_argument("--criterion", choices=("spectral", "lyapunov"), default="spectral")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, PredictorLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(scenario, out, args.mode)
        if args.command == "analyze":
            return cmd_analyze(scenario, out)
        if args.command == "sweep":
            return cmd_sweep(scenario, out, args.t_lo, args.t_hi, args.t_step, args.criterion)
        return cmd_verify(scenario, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
