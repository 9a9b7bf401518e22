"""
Resonance grids, mode assignment and frequency matching.

Resonances follow a Taylor expansion in the azimuthal mode number around a
reference mode ``m0``::

    w(m) = w0 + D1 (m - m0) + D2 (m - m0)^2 / 2 + D3 (m - m0)^3 / 6

with optional per-mode offsets standing in for avoided crossings. All
frequencies here are angular [rad/s]; the band parameters are stored in Hz
(``fsr``, ``d2``, ``d3`` are ``D/2pi``) because that is how they are quoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.constants import c as C_LIGHT

from .cmt import CouplingSet, PumpConfig, RingParams
from .errors import AssignmentError, ConfigurationError, ModeRangeError, ThermalRangeError

TWO_PI = 2.0 * math.pi
DEFAULT_THERMAL_RATE = 13.67e-12  # m/K, measured on the 917 nm mode
DEFAULT_WINDOW = 50


@dataclass(frozen=True)
class BandDispersion:
    """Resonance grid of one band.

    Parameters
    ----------
    reference_frequency : float
        Frequency of mode ``reference_mode`` [Hz].
    reference_mode : int
        Azimuthal mode number at the expansion center.
    fsr : float
        Free spectral range ``D1 / 2pi`` [Hz].
    d2, d3 : float
        ``D2 / 2pi`` and ``D3 / 2pi`` [Hz].
    window : int
        Largest trusted ``|m - m0|``.
    mode_offsets : mapping of int to float
        Extra resonance shifts [Hz] keyed by ``m - m0``.
    """

    reference_frequency: float
    reference_mode: int
    fsr: float
    d2: float = 0.0
    d3: float = 0.0
    window: int = DEFAULT_WINDOW
    mode_offsets: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.fsr > 0:
            raise ConfigurationError(f"DispersionModel invariant violated: FSR must be > 0, got {self.fsr}")
        if not self.reference_frequency > 0:
            raise ConfigurationError("DispersionModel invariant violated: reference frequency must be > 0")
        if self.window < 1:
            raise ConfigurationError("DispersionModel invariant violated: validity window must be >= 1")
        object.__setattr__(self, "mode_offsets", MappingProxyType({int(k): float(v) for k, v in self.mode_offsets.items()}))
        # adjacent-mode spacing must stay positive over the window
        k = np.arange(-self.window, self.window)
        spacing = self.fsr + self.d2 * (k + 0.5) + self.d3 * (3 * k**2 + 3 * k + 1) / 6.0
        if np.any(spacing <= 0):
            raise ConfigurationError("DispersionModel invariant violated: resonance ordering breaks inside the window")

    @property
    def omega0(self) -> float:
        return TWO_PI * self.reference_frequency

    @property
    def d1(self) -> float:
        """D1 [rad/s per mode]."""
        return TWO_PI * self.fsr

    @property
    def d2_angular(self) -> float:
        return TWO_PI * self.d2

    @property
    def d3_angular(self) -> float:
        return TWO_PI * self.d3

    def with_offsets(self, offsets: Mapping[int, float]) -> "BandDispersion":
        merged = dict(self.mode_offsets)
        merged.update(offsets)
        return BandDispersion(
            self.reference_frequency, self.reference_mode, self.fsr, self.d2, self.d3, self.window, merged
        )


@dataclass(frozen=True)
class DispersionModel:
    """Signal-band and pump-band grids plus the thermal tuning rate [m/K]."""

    signal: BandDispersion
    pump: BandDispersion
    thermal_rate: float = DEFAULT_THERMAL_RATE

    def __post_init__(self) -> None:
        if not self.thermal_rate > 0:
            raise ConfigurationError("DispersionModel invariant violated: thermal tuning rate must be > 0")

    def band(self, name: str) -> BandDispersion:
        if name not in ("signal", "pump"):
            raise ValueError(f"unknown band {name!r}")
        return getattr(self, name)


def _band(disp: DispersionModel | BandDispersion, band: str | None) -> BandDispersion:
    if isinstance(disp, BandDispersion):
        return disp
    return disp.band(band or "signal")


def mode_frequency(disp: DispersionModel | BandDispersion, band: str | None, m: int) -> float:
    """Angular resonance frequency of mode ``m`` [rad/s]."""
    b = _band(disp, band)
    k = int(m) - b.reference_mode
    if abs(k) > b.window:
        raise ModeRangeError(f"mode {m} is {abs(k)} modes from m0={b.reference_mode}; window is {b.window}")
    hz = b.reference_frequency + b.fsr * k + 0.5 * b.d2 * k**2 + b.d3 * k**3 / 6.0 + b.mode_offsets.get(k, 0.0)
    return TWO_PI * hz


def nearest_mode(b: BandDispersion, omega: float) -> tuple[int, float]:
    """Closest in-window mode and the residual ``omega - w(m)`` [rad/s]."""
    guess = b.reference_mode + int(round((omega / TWO_PI - b.reference_frequency) / b.fsr))
    best, best_res = None, math.inf
    for m in range(guess - 2, guess + 3):
        if abs(m - b.reference_mode) > b.window:
            continue
        res = omega - mode_frequency(b, None, m)
        if abs(res) < abs(best_res):
            best, best_res = m, res
    if best is None:
        raise ModeRangeError(f"frequency {omega / TWO_PI:.6e} Hz lies outside the validity window")
    return best, best_res


@dataclass(frozen=True)
class ModeAssignment:
    """Azimuthal mode numbers of the five interacting fields."""

    signal: int
    pump1: int
    pump2: int
    idler_plus: int
    idler_minus: int

    def __post_init__(self) -> None:
        mu = self.mu
        if self.idler_plus != self.signal + mu or self.idler_minus != self.signal - mu:
            raise ConfigurationError("ModeAssignment invariant violated: idlers must sit at m_s +/- |m_p1 - m_p2|")

    @property
    def mu(self) -> int:
        return abs(self.pump1 - self.pump2)


def assign_modes(disp: DispersionModel, omega_s: float, omega_p1: float, omega_p2: float) -> ModeAssignment:
    """Nearest-mode assignment with idlers placed by the matching rule.

    Raises :class:`AssignmentError` when a frequency is half an FSR or more
    from every resonance.
    """
    picks = []
    for band_name, omega in (("signal", omega_s), ("pump", omega_p1), ("pump", omega_p2)):
        b = disp.band(band_name)
        m, res = nearest_mode(b, omega)
        if abs(res) >= 0.5 * b.d1 * (1.0 - 1e-9):
            raise AssignmentError(f"{band_name} frequency is not within half an FSR of any mode", res / TWO_PI)
        picks.append(m)
    m_s, m_p1, m_p2 = picks
    mu = abs(m_p1 - m_p2)
    if mu < 1:
        raise AssignmentError("both pumps map onto the same pump mode", (omega_p1 - omega_p2) / TWO_PI)
    return ModeAssignment(m_s, m_p1, m_p2, m_s + mu, m_s - mu)


def detunings(
    disp: DispersionModel,
    assignment: ModeAssignment,
    omega_s: float,
    omega_p1: float,
    omega_p2: float,
    ring: RingParams,
    omega0: float = 0.0,
    pumps: PumpConfig | None = None,
) -> CouplingSet:
    """Signal and idler detunings from the resonance grid.

    ``delta_k = (w(m_k) - w_k) t_R`` with ``w_{i+/-} = w_s +/- |w_p1 - w_p2|``.
    When ``pumps`` carries intracavity fields, pump-imbalance cross-phase
    modulation is folded into the idler detunings so that ``omega1`` matches
    the closed-form expression.
    """
    t_r = ring.round_trip_time
    sep = abs(omega_p1 - omega_p2)
    d_s = (mode_frequency(disp, "signal", assignment.signal) - omega_s) * t_r
    d_p = (mode_frequency(disp, "signal", assignment.idler_plus) - (omega_s + sep)) * t_r
    d_m = (mode_frequency(disp, "signal", assignment.idler_minus) - (omega_s - sep)) * t_r
    if pumps is not None and pumps.field1 is not None and pumps.field2 is not None:
        xpm = 0.5 * ring.gamma_pump * ring.circumference * (abs(pumps.field1) ** 2 - abs(pumps.field2) ** 2)
        d_p -= xpm
        d_m += xpm
    return CouplingSet.from_detunings(omega0, d_s, d_p, d_m)


def approximate_mismatch(disp: DispersionModel, ring: RingParams, m_s: int, mu: int, separation: float) -> tuple[float, float]:
    """Closed-form ``(omega1, omega2)`` using the local FSR at the signal mode."""
    b = disp.signal
    k = m_s - b.reference_mode
    local_d1 = b.d1 + b.d2_angular * k + 0.5 * b.d3_angular * k**2
    t_r = ring.round_trip_time
    return (local_d1 * mu - separation) * t_r, 0.5 * b.d2_angular * mu**2 * t_r


# ---------------------------------------------------------------------------
# Thermal tuning and translation range
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuneState:
    """Chip temperature [C] relative to a reference, with a linear shift rate [m/K]."""

    temperature: float
    reference_temperature: float = 20.0
    rate: float = DEFAULT_THERMAL_RATE
    t_min: float = -math.inf
    t_max: float = math.inf

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ConfigurationError("thermal tuning rate must be > 0")

    @property
    def shift(self) -> float:
        """Resonance wavelength shift [m] at the current temperature."""
        return self.rate * (self.temperature - self.reference_temperature)


@dataclass(frozen=True)
class TuneResult:
    temperature: float
    wavelength_shift: float
    residual: float
    note: str


def thermal_tune(tune: TuneState, resonance_wavelength: float, target_wavelength: float) -> TuneResult:
    """Temperature that moves a resonance (given at the reference temperature) onto a target.

    Raises :class:`ThermalRangeError` carrying the clamped temperature and
    the unreachable remainder if the answer falls outside
    ``[t_min, t_max]``.
    """
    needed = target_wavelength - resonance_wavelength
    temp = tune.reference_temperature + needed / tune.rate
    note = "retune both pumps by the same thermal shift, keeping their separation fixed"
    if temp < tune.t_min or temp > tune.t_max:
        clamped = min(max(temp, tune.t_min), tune.t_max)
        residual = needed - tune.rate * (clamped - tune.reference_temperature)
        raise ThermalRangeError(
            f"required temperature {temp:.3f} C outside [{tune.t_min}, {tune.t_max}] C", clamped, residual
        )
    return TuneResult(temp, needed, 0.0, note)


def translation_range(disp: DispersionModel, mu: int) -> tuple[float, float]:
    """Spectral shift ``(hz, meters)`` for pumps ``mu`` modes apart.

    The wavelength shift is evaluated at the signal reference wavelength.
    """
    if mu < 1:
        raise ValueError("mu must be >= 1")
    shift_hz = mu * disp.signal.fsr
    lam = C_LIGHT / disp.signal.reference_frequency
    return shift_hz, lam**2 * shift_hz / C_LIGHT
