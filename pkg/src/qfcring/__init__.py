"""
Coupled-mode model of four-wave-mixing Bragg-scattering frequency conversion
in a microring, with finite-linewidth inputs, photon-statistics tools and
reproducible figure sweeps.
"""

from .cmt import (
    BandParams,
    CalibrationTargets,
    CouplingSet,
    PumpConfig,
    RingParams,
    SignalInput,
    calibrate,
    response,
    steady_state,
)
from .config import RunConfig, load_config, parse_config
from .spectral import LineShape, PulseShape, Spectrum, avg_conversion_efficiency

__all__ = [
    "BandParams",
    "CalibrationTargets",
    "CouplingSet",
    "LineShape",
    "PulseShape",
    "PumpConfig",
    "RingParams",
    "RunConfig",
    "SignalInput",
    "Spectrum",
    "avg_conversion_efficiency",
    "calibrate",
    "load_config",
    "parse_config",
    "response",
    "steady_state",
]

__version__ = "0.1.0"
