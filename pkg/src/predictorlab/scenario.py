"""JSON scenario files.

Schema (all keys required except ``mode``)::

    {
      "plant": {"A": [[...], ...], "B": [[...], ...], "D": number},
      "gains": {"K": [[...], ...], "L": [[...], ...], "T": number},
      "sim":   {"h": number, "t_end": number, "x0": [...]},
      "mode":  "modified" | "classical" | "open_loop"
    }

Matrices are nested row lists. Errors carry the dotted path of the
offending field (``gains.T``, ``plant.A[1]`` ...).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError, PredictorLabError
from .predictor import PredictorGains
from .simulation import MODES, Plant, SimConfig, step_count

__all__ = [
    "Scenario",
    "BUNDLED",
    "parse_scenario",
    "scenario_from_dict",
    "resolve_scenario_path",
    "write_scenario",
]

BUNDLED = ("paper_fig1.json", "paper_fig2.json")


@dataclass(frozen=True, eq=False)
class Scenario:
    plant: Plant
    gains: PredictorGains
    sim: SimConfig
    mode: str = "modified"

    def to_dict(self):
        return {
            "plant": {"A": self.plant.A.tolist(), "B": self.plant.B.tolist(), "D": self.plant.D},
            "gains": {"K": self.gains.K.tolist(), "L": self.gains.L.tolist(), "T": self.gains.T},
            "sim": {"h": self.sim.h, "t_end": self.sim.t_end, "x0": self.sim.x0.tolist()},
            "mode": self.mode,
        }

    def with_updates(self, *, D=None, T=None, h=None, t_end=None, x0=None, L=None, K=None, mode=None):
        """Copy with selected fields replaced (re-validated)."""
        data = self.to_dict()
        for section, key, value in (
            ("plant", "D", D), ("gains", "T", T), ("gains", "L", L), ("gains", "K", K),
            ("sim", "h", h), ("sim", "t_end", t_end), ("sim", "x0", x0),
        ):
            if value is not None:
                data[section][key] = value.tolist() if hasattr(value, "tolist") else value
        if mode is not None:
            data["mode"] = mode
        return scenario_from_dict(data)


def _section(data, key, path):
    if not isinstance(data, dict):
        raise ConfigurationError("expected an object", path or "<root>")
    if key not in data:
        raise ConfigurationError("missing key", f"{path}.{key}" if path else key)
    return data[key]


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError("non-finite number", path)
    return value


def _vector(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigurationError("expected a non-empty array of numbers", path)
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _matrix(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigurationError("expected a non-empty array of rows", path)
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ConfigurationError("expected a row array (matrices are nested row lists)", f"{path}[{i}]")
        rows.append(_vector(row, f"{path}[{i}]"))
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ConfigurationError(f"row has {len(row)} entries, expected {width}", f"{path}[{i}]")
    return rows


def scenario_from_dict(data):
    """Validate a decoded scenario object and build a :class:`Scenario`."""
    plant_d = _section(data, "plant", "")
    gains_d = _section(data, "gains", "")
    sim_d = _section(data, "sim", "")

    A = _matrix(_section(plant_d, "A", "plant"), "plant.A")
    B = _matrix(_section(plant_d, "B", "plant"), "plant.B")
    D = _number(_section(plant_d, "D", "plant"), "plant.D")
    K = _matrix(_section(gains_d, "K", "gains"), "gains.K")
    L = _matrix(_section(gains_d, "L", "gains"), "gains.L")
    T = _number(_section(gains_d, "T", "gains"), "gains.T")
    h = _number(_section(sim_d, "h", "sim"), "sim.h")
    t_end = _number(_section(sim_d, "t_end", "sim"), "sim.t_end")
    x0 = _vector(_section(sim_d, "x0", "sim"), "sim.x0")
    mode = data.get("mode", "modified")
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}", "mode")

    n = len(A)
    if len(A[0]) != n:
        raise ConfigurationError(f"must be square, got {n}x{len(A[0])}", "plant.A")
    if len(B) != n:
        raise ConfigurationError(f"must have {n} rows, got {len(B)}", "plant.B")
    m = len(B[0])
    if len(K) != m or len(K[0]) != n:
        raise ConfigurationError(f"must be {m}x{n}, got {len(K)}x{len(K[0])}", "gains.K")
    if len(L) != n or len(L[0]) != n:
        raise ConfigurationError(f"must be {n}x{n}, got {len(L)}x{len(L[0])}", "gains.L")
    if len(x0) != n:
        raise ConfigurationError(f"must have length {n}, got {len(x0)}", "sim.x0")
    if D < 0:
        raise ConfigurationError("delay must be non-negative", "plant.D")
    if T <= 0:
        raise ConfigurationError("reset period must be positive", "gains.T")
    if h <= 0:
        raise ConfigurationError("step must be positive", "sim.h")
    if t_end < 0:
        raise ConfigurationError("horizon must be non-negative", "sim.t_end")
    step_count(D, h, "plant.D")
    step_count(T, h, "gains.T")

    return Scenario(
        plant=Plant(A, B, D),
        gains=PredictorGains(K, L, T),
        sim=SimConfig(h, t_end, x0),
        mode=mode,
    )


def resolve_scenario_path(name):
    """Return a filesystem path, falling back to the bundled scenarios by name."""
    path = Path(name)
    if path.exists():
        return path
    key = path.name if path.name.endswith(".json") else f"{path.name}.json"
    if key in BUNDLED and str(path.parent) in ("", "."):
        return Path(str(resources.files("predictorlab") / "scenarios" / key))
    return path


def parse_scenario(path):
    """Read and validate a scenario file (or a bundled scenario name).

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigurationError
        On malformed JSON or any schema/validation failure.
    """
    path = resolve_scenario_path(path)
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}", str(path)) from exc
    try:
        return scenario_from_dict(data)
    except ConfigurationError:
        raise
    except (PredictorLabError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def write_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n", encoding="utf-8")
