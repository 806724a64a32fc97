"""Nonlinear RF energy-harvesting model, convexity checks and transmitter placement."""

from .errors import ConfigurationError, DomainError, GridTooLargeError, ValidationError
from .waveforms import Waveform, WaveformKind, builtin_waveform, custom_waveform
from .rectifier import (
    HarvestModel,
    RectifierParams,
    build_model,
    lambert_w0,
    p_dc,
    rho,
    solve_iout,
)
from .calculus import ConvexityReport, ParamCurve, certify_convexity, diout_drho, dpdc_dd
from .positioning import (
    GridResult,
    Scenario,
    SiaTrace,
    Surrogate,
    build_surrogate,
    exhaustive_search,
    generate_scenario,
    min_harvest,
    pathloss,
    sia_solve,
    solve_subproblem,
)

__all__ = [
    "ConfigurationError",
    "ConvexityReport",
    "DomainError",
    "GridResult",
    "GridTooLargeError",
    "HarvestModel",
    "ParamCurve",
    "RectifierParams",
    "Scenario",
    "SiaTrace",
    "Surrogate",
    "ValidationError",
    "Waveform",
    "WaveformKind",
    "build_model",
    "build_surrogate",
    "builtin_waveform",
    "certify_convexity",
    "custom_waveform",
    "diout_drho",
    "dpdc_dd",
    "exhaustive_search",
    "generate_scenario",
    "lambert_w0",
    "min_harvest",
    "p_dc",
    "pathloss",
    "rho",
    "sia_solve",
    "solve_iout",
    "solve_subproblem",
]

__version__ = "0.1.0"
