"""Simulation and stability analysis of a reset-corrected Smith predictor
for unstable linear plants with input delay."""

from .errors import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    DomainError,
    PredictorLabError,
    RangeError,
    SingularMatrixError,
)
from .linalg import (
    expm,
    hurwitz_certificate,
    operator_norm,
    solve_linear,
    spectral_abscissa,
    spectral_radius,
)
from .predictor import PredictorGains, validate_gains
from .scenario import Scenario, parse_scenario, write_scenario
from .simulation import (
    Plant,
    SimConfig,
    compute_derived_signals,
    residual_report,
    simulate_closed_loop,
)
from .stability import discrete_map, find_min_stable_T, lyapunov_certificate_discrete

__version__ = "0.1.0"
