"""
Coupled-mode model of four-wave-mixing Bragg scattering in a microring.

Three intracavity modes are tracked: the signal ``E_s`` and the two
first-order idlers ``E_{i+}`` (blue) and ``E_{i-}`` (red). With time measured
in round trips the equations read

    t_R dE_s/dt  = -(a + i d_s) E_s + i W0 (E_{i+} + E_{i-}) + i sqrt(theta P_s)
    t_R dE_+/dt  = -(a + i (d_s + W1 + W2)) E_+ + i W0 E_s
    t_R dE_-/dt  = -(a + i (d_s - W1 + W2)) E_- + i W0 E_s

where ``a`` is the loaded per-round-trip amplitude loss, ``theta`` the power
coupling to the bus waveguide, ``W0`` the parametric coupling set by the two
pumps and ``W1``/``W2`` the antisymmetric/symmetric idler frequency
mismatches. ``|E|^2`` is the circulating power in watts.

Sign convention: detunings are ``(resonance - laser) * t_R``, so a laser
red of its resonance has positive detuning. Raising the laser frequency by
``df`` lowers every detuning by ``2 pi df t_R``.

Remnant signal at the output: ``s_out = sqrt(P_s) + i sqrt(theta) E_s``,
which gives zero transmission for a critically coupled, unpumped mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.constants import h as PLANCK
from scipy.optimize import brentq, least_squares, minimize_scalar

from .errors import ConfigurationError, ConvergenceError, IllConditionedError

if TYPE_CHECKING:
    from .dispersion import DispersionModel

TWO_PI = 2.0 * math.pi
CONDITION_LIMIT = 1e12
ORACLE_TOLERANCE = 1e-9
MAX_EXTENDED_ORDER = 16


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandParams:
    """Quality factors of one resonance band.

    Parameters
    ----------
    frequency : float
        Resonance frequency of the reference mode [Hz].
    q_intrinsic : float
        Intrinsic (internal loss) quality factor.
    q_coupling : float
        Coupling (bus waveguide) quality factor.
    """

    frequency: float
    q_intrinsic: float
    q_coupling: float

    def __post_init__(self) -> None:
        for name in ("frequency", "q_intrinsic", "q_coupling"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"RingParams invariant violated: {name} must be > 0, got {value}")

    @classmethod
    def from_linewidths(cls, frequency: float, loaded_linewidth: float, q_intrinsic: float) -> "BandParams":
        """Build from a loaded linewidth [Hz] and a fixed intrinsic Q."""
        intrinsic_lw = frequency / q_intrinsic
        coupling_lw = loaded_linewidth - intrinsic_lw
        if coupling_lw <= 0:
            raise ConfigurationError(
                f"RingParams invariant violated: loaded linewidth {loaded_linewidth:.4g} Hz "
                f"must exceed the intrinsic linewidth {intrinsic_lw:.4g} Hz"
            )
        return cls(frequency, q_intrinsic, frequency / coupling_lw)

    @property
    def q_loaded(self) -> float:
        return 1.0 / (1.0 / self.q_intrinsic + 1.0 / self.q_coupling)

    @property
    def loaded_linewidth(self) -> float:
        """Energy-decay FWHM [Hz]."""
        return self.frequency / self.q_loaded

    @property
    def intrinsic_linewidth(self) -> float:
        return self.frequency / self.q_intrinsic

    @property
    def coupling_linewidth(self) -> float:
        return self.frequency / self.q_coupling

    @property
    def extraction(self) -> float:
        """Fraction of intracavity decay that exits into the bus, kappa_c / kappa."""
        return self.q_loaded / self.q_coupling


@dataclass(frozen=True)
class RingParams:
    """Resonator loss, coupling and nonlinearity.

    ``alpha`` and ``theta`` refer to the signal band; the pump band is optional
    and only needed when intracavity pump fields are computed from powers.
    """

    radius: float
    round_trip_time: float
    signal: BandParams
    gamma_signal: float
    gamma_pump: float
    pump: BandParams | None = None

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigurationError(f"RingParams invariant violated: radius must be > 0, got {self.radius}")
        if not self.round_trip_time > 0:
            raise ConfigurationError(
                f"RingParams invariant violated: round_trip_time must be > 0, got {self.round_trip_time}"
            )
        if self.gamma_signal < 0 or self.gamma_pump < 0:
            raise ConfigurationError("RingParams invariant violated: Kerr coefficients must be >= 0")

    @property
    def circumference(self) -> float:
        return TWO_PI * self.radius

    @property
    def alpha(self) -> float:
        """Loaded loss per round trip, omega_s t_R / (2 Q_L)."""
        return math.pi * self.signal.frequency * self.round_trip_time / self.signal.q_loaded

    @property
    def theta(self) -> float:
        """Power coupling per round trip, omega_s t_R / Q_c."""
        return TWO_PI * self.signal.frequency * self.round_trip_time / self.signal.q_coupling

    @property
    def intrinsic_alpha(self) -> float:
        return self.alpha - 0.5 * self.theta

    def _pump_band(self) -> BandParams:
        if self.pump is None:
            raise ConfigurationError("pump-band parameters missing: RingParams.pump is not set")
        return self.pump

    @property
    def alpha_pump(self) -> float:
        band = self._pump_band()
        return math.pi * band.frequency * self.round_trip_time / band.q_loaded

    @property
    def theta_pump(self) -> float:
        band = self._pump_band()
        return TWO_PI * band.frequency * self.round_trip_time / band.q_coupling

    def detuning(self, offset_hz):
        """Convert a frequency offset [Hz] into dimensionless detuning units."""
        return TWO_PI * np.asarray(offset_hz) * self.round_trip_time

    def hz(self, detuning):
        """Inverse of :meth:`detuning`."""
        return np.asarray(detuning) / (TWO_PI * self.round_trip_time)

    def with_loaded_linewidth(self, loaded_linewidth: float) -> "RingParams":
        """Same ring with the signal-band coupling changed, intrinsic Q fixed."""
        band = BandParams.from_linewidths(self.signal.frequency, loaded_linewidth, self.signal.q_intrinsic)
        return replace(self, signal=band)


@dataclass(frozen=True)
class PumpConfig:
    """Two pump tones in the pump band.

    Frequencies are angular [rad/s]; fields are intracavity amplitudes with
    ``|E|^2`` in watts, ``None`` until :func:`pump_buildup` fills them.
    """

    power1: float
    power2: float
    frequency1: float
    frequency2: float
    mode1: int
    mode2: int
    field1: complex | None = None
    field2: complex | None = None

    def __post_init__(self) -> None:
        if self.power1 < 0 or self.power2 < 0:
            raise ConfigurationError("PumpConfig invariant violated: pump powers must be >= 0")
        if self.mu < 1:
            raise ConfigurationError("PumpConfig invariant violated: pump mode separation must be >= 1")
        if not abs(self.frequency1 - self.frequency2) > 0:
            raise ConfigurationError("PumpConfig invariant violated: pump frequencies must differ")

    @property
    def mu(self) -> int:
        return abs(self.mode1 - self.mode2)

    @property
    def separation(self) -> float:
        """|omega_p1 - omega_p2| [rad/s]."""
        return abs(self.frequency1 - self.frequency2)

    @property
    def total_power(self) -> float:
        return self.power1 + self.power2


@dataclass(frozen=True)
class CouplingSet:
    """Dimensionless couplings and detunings entering the mode equations.

    The idler detunings are derived from ``omega1``/``omega2`` so that the
    mismatch definitions hold exactly.
    """

    omega0: float
    omega1: float = 0.0
    omega2: float = 0.0
    signal_detuning: float = 0.0

    def __post_init__(self) -> None:
        if self.omega0 < 0:
            raise ConfigurationError(f"CouplingSet invariant violated: omega0 must be >= 0, got {self.omega0}")

    @classmethod
    def from_detunings(cls, omega0: float, signal: float, idler_plus: float, idler_minus: float) -> "CouplingSet":
        return cls(
            omega0=omega0,
            omega1=0.5 * (idler_plus - idler_minus),
            omega2=0.5 * (idler_plus + idler_minus - 2.0 * signal),
            signal_detuning=signal,
        )

    @property
    def idler_plus_detuning(self) -> float:
        return self.signal_detuning + self.omega1 + self.omega2

    @property
    def idler_minus_detuning(self) -> float:
        return self.signal_detuning - self.omega1 + self.omega2

    def shifted(self, delta: float) -> "CouplingSet":
        """Shift all three detunings by ``delta`` (signal laser tuned)."""
        return replace(self, signal_detuning=self.signal_detuning + delta)

    def scaled(self, factor: float) -> "CouplingSet":
        return CouplingSet(
            self.omega0 * factor, self.omega1 * factor, self.omega2 * factor, self.signal_detuning * factor
        )

    def with_omega0(self, omega0: float) -> "CouplingSet":
        return replace(self, omega0=omega0)


@dataclass(frozen=True)
class SignalInput:
    """Continuous-wave signal at the bus input (power [W], carrier [rad/s])."""

    power: float
    frequency: float

    def __post_init__(self) -> None:
        if self.power < 0:
            raise ConfigurationError(f"SignalInput invariant violated: power must be >= 0, got {self.power}")

    @classmethod
    def from_flux(cls, flux: float, frequency: float) -> "SignalInput":
        return cls(flux * PLANCK * frequency / TWO_PI, frequency)

    @property
    def flux(self) -> float:
        """Photon flux [1/s]."""
        return self.power / (PLANCK * self.frequency / TWO_PI)


@dataclass(frozen=True)
class FieldSolution:
    """Steady-state fields, bus powers and per-channel efficiencies.

    Efficiencies and transmission are normalized to the input power and do
    not depend on it; they are defined also for ``P_s = 0``.
    """

    signal: complex
    idler_plus: complex
    idler_minus: complex
    input_power: float
    power_out_signal: float
    power_out_plus: float
    power_out_minus: float
    efficiency_plus: float
    efficiency_minus: float
    transmission: float
    dissipated: float

    @property
    def fields(self) -> np.ndarray:
        return np.array([self.signal, self.idler_plus, self.idler_minus])

    @property
    def balance_defect(self) -> float:
        """1 - (eta_+ + eta_- + T_s + dissipated); zero up to rounding."""
        return 1.0 - (self.efficiency_plus + self.efficiency_minus + self.transmission + self.dissipated)


# ---------------------------------------------------------------------------
# Pump fields and parametric couplings
# ---------------------------------------------------------------------------


def pump_buildup(ring: RingParams, pumps: PumpConfig, pump_detunings: tuple[float, float] = (0.0, 0.0)) -> PumpConfig:
    """Linear build-up of the two intracavity pump fields.

    ``E_p = i sqrt(theta_p P_p) / (alpha_p + i delta_p)`` for each pump.
    """
    a_p = ring.alpha_pump
    th_p = ring.theta_pump
    fields = [
        1j * math.sqrt(th_p * p) / (a_p + 1j * d)
        for p, d in zip((pumps.power1, pumps.power2), pump_detunings)
    ]
    return replace(pumps, field1=complex(fields[0]), field2=complex(fields[1]))


def _pump_fields(pumps: PumpConfig) -> tuple[complex, complex]:
    if pumps.field1 is None or pumps.field2 is None:
        raise ConfigurationError("intracavity pump fields not populated; call pump_buildup first")
    return pumps.field1, pumps.field2


def omega0(ring: RingParams, pumps: PumpConfig) -> float:
    """Parametric coupling ``2 gamma_s L |E_p1| |E_p2|``."""
    e1, e2 = _pump_fields(pumps)
    return 2.0 * ring.gamma_signal * ring.circumference * abs(e1) * abs(e2)


def mismatch_terms(disp: "DispersionModel", ring: RingParams, pumps: PumpConfig) -> tuple[float, float]:
    """Closed-form idler mismatches from the signal-band FSR and dispersion.

    ``W1 = (D1 mu - |w_p1 - w_p2|) t_R - (gamma_p L / 2)(|E_p1|^2 - |E_p2|^2)``
    and ``W2 = D2 mu^2 t_R / 2``. Pump fields that are not populated are
    treated as equal (the imbalance term vanishes).
    """
    band = disp.signal
    mu = pumps.mu
    t_r = ring.round_trip_time
    imbalance = 0.0
    if pumps.field1 is not None and pumps.field2 is not None:
        imbalance = abs(pumps.field1) ** 2 - abs(pumps.field2) ** 2
    w1 = (band.d1 * mu - pumps.separation) * t_r - 0.5 * ring.gamma_pump * ring.circumference * imbalance
    w2 = 0.5 * band.d2_angular * mu**2 * t_r
    return w1, w2


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------


def _alphas(ring: RingParams, alphas: Sequence[float] | None) -> np.ndarray:
    if alphas is None:
        return np.full(3, ring.alpha)
    arr = np.asarray(alphas, dtype=float)
    if arr.shape != (3,) or np.any(arr <= 0):
        raise ConfigurationError("per-mode loss overrides must be three positive numbers")
    return arr


def coupled_matrix(ring: RingParams, c: CouplingSet, delta=0.0, alphas: Sequence[float] | None = None) -> np.ndarray:
    """System matrix ``M`` with ``t_R dE/dt = M E + drive``.

    ``delta`` (scalar or array) is added to every detuning; the result has
    shape ``delta.shape + (3, 3)``.
    """
    a = _alphas(ring, alphas)
    delta = np.asarray(delta, dtype=float)
    m = np.zeros(delta.shape + (3, 3), dtype=complex)
    m[..., 0, 0] = -(a[0] + 1j * (c.signal_detuning + delta))
    m[..., 1, 1] = -(a[1] + 1j * (c.idler_plus_detuning + delta))
    m[..., 2, 2] = -(a[2] + 1j * (c.idler_minus_detuning + delta))
    m[..., 0, 1] = m[..., 0, 2] = m[..., 1, 0] = m[..., 2, 0] = 1j * c.omega0
    return m


def _check_condition(m: np.ndarray) -> None:
    cond = np.linalg.cond(m)
    worst = float(np.max(cond))
    if not worst <= CONDITION_LIMIT:
        raise IllConditionedError(worst, CONDITION_LIMIT)


def _outputs(ring: RingParams, fields: np.ndarray, alphas: np.ndarray) -> dict[str, np.ndarray]:
    """Unit-input-power outputs from fields of shape (..., 3)."""
    th = ring.theta
    sq = np.sqrt(th)
    remnant = 1.0 + 1j * sq * fields[..., 0]
    return {
        "eta_plus": th * np.abs(fields[..., 1]) ** 2,
        "eta_minus": th * np.abs(fields[..., 2]) ** 2,
        "transmission": np.abs(remnant) ** 2,
        "dissipated": np.sum((2.0 * alphas - th) * np.abs(fields) ** 2, axis=-1),
    }


def response(ring: RingParams, c: CouplingSet, delta=0.0, alphas: Sequence[float] | None = None) -> dict[str, np.ndarray]:
    """Vectorized unit-power response for detuning shifts ``delta``.

    Returns arrays ``eta_plus``, ``eta_minus``, ``transmission``,
    ``dissipated`` and the complex ``fields`` (shape ``(..., 3)``) for a
    1 W input.
    """
    a = _alphas(ring, alphas)
    m = coupled_matrix(ring, c, delta, alphas)
    _check_condition(m)
    drive = np.zeros(m.shape[:-1], dtype=complex)
    drive[..., 0] = 1j * math.sqrt(ring.theta)
    fields = np.linalg.solve(m, -drive[..., None])[..., 0]
    out = _outputs(ring, fields, a)
    out["fields"] = fields
    return out


def _solution(ring: RingParams, fields: np.ndarray, power: float, alphas: np.ndarray) -> FieldSolution:
    """Build a FieldSolution from unit-power fields."""
    out = _outputs(ring, fields, alphas)
    scale = math.sqrt(power)
    return FieldSolution(
        signal=complex(fields[0] * scale),
        idler_plus=complex(fields[1] * scale),
        idler_minus=complex(fields[2] * scale),
        input_power=power,
        power_out_signal=float(out["transmission"]) * power,
        power_out_plus=float(out["eta_plus"]) * power,
        power_out_minus=float(out["eta_minus"]) * power,
        efficiency_plus=float(out["eta_plus"]),
        efficiency_minus=float(out["eta_minus"]),
        transmission=float(out["transmission"]),
        dissipated=float(out["dissipated"]),
    )


def steady_state(ring: RingParams, c: CouplingSet, sig: SignalInput, alphas: Sequence[float] | None = None) -> FieldSolution:
    """Solve the three coupled-mode equations with ``d/dt = 0``.

    Parameters
    ----------
    ring, c, sig
        Resonator, couplings and cw input.
    alphas : sequence of 3 floats, optional
        Experimental per-mode loss overrides ``(signal, idler+, idler-)``;
        the coupling ``theta`` stays common to all three modes.
    """
    a = _alphas(ring, alphas)
    m = coupled_matrix(ring, c, 0.0, alphas)
    _check_condition(m)
    drive = np.array([1j * math.sqrt(ring.theta), 0.0, 0.0])
    fields = np.linalg.solve(m, -drive)
    return _solution(ring, fields, sig.power, a)


# ---------------------------------------------------------------------------
# Time-domain oracle
# ---------------------------------------------------------------------------


def integrate_linear(matrix: np.ndarray, drive: np.ndarray, horizon: float, step: float | None = None):
    """Integrate ``dE/dtau = M E + b`` from zero fields with classical RK4.

    ``tau`` is time in round trips. Works on stacks: ``matrix`` has shape
    ``(..., n, n)`` and ``drive`` ``(..., n)``; one step size is used for the
    whole stack.

    Returns
    -------
    fields : ndarray
        Fields at ``horizon``.
    history : ndarray
        Fields at ``horizon - 1/decay`` (one photon lifetime earlier), used
        for the convergence check.
    """
    matrix = np.asarray(matrix, dtype=complex)
    drive = np.asarray(drive, dtype=complex)
    norm = float(np.max(np.sum(np.abs(matrix), axis=-1)))
    if step is None:
        step = 0.25 / norm
    n_steps = int(math.ceil(horizon / step))
    step = horizon / n_steps
    decay = float(np.min(-np.real(np.diagonal(matrix, axis1=-2, axis2=-1))))
    mark = n_steps - max(1, int(round(1.0 / (decay * step))))

    def rhs(y):
        return np.einsum("...ij,...j->...i", matrix, y) + drive

    y = np.zeros_like(drive)
    snapshot = y
    for k in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k + 1 == mark:
            snapshot = y
    return y, snapshot


def _oracle_fields(ring, couplings: Sequence[CouplingSet], horizon, alphas, tol):
    a = _alphas(ring, alphas)
    matrix = np.stack([coupled_matrix(ring, c, 0.0, alphas) for c in couplings])
    drive = np.zeros((len(couplings), 3), dtype=complex)
    drive[:, 0] = 1j * math.sqrt(ring.theta)
    if horizon is None:
        horizon = 50.0 * ring.round_trip_time / float(np.min(a))
    fields, earlier = integrate_linear(matrix, drive, horizon / ring.round_trip_time)
    scale = np.maximum(np.linalg.norm(fields, axis=-1), 1e-300)
    residual = float(np.max(np.linalg.norm(fields - earlier, axis=-1) / scale))
    if residual > tol:
        raise ConvergenceError("time integration not converged: field still changing over the last lifetime", residual)
    return fields, a


def ode_oracle(
    ring: RingParams,
    c: CouplingSet,
    sig: SignalInput,
    horizon: float | None = None,
    alphas: Sequence[float] | None = None,
    tol: float = 1e-6,
) -> FieldSolution:
    """Time-integrate the mode equations from empty cavity to ``horizon`` seconds.

    Independent check of :func:`steady_state`: only the right-hand side is
    evaluated, no linear solve. The default horizon is 50 photon lifetimes.
    Raises :class:`ConvergenceError` when the relative field change over the
    final lifetime exceeds ``tol``.
    """
    fields, a = _oracle_fields(ring, [c], horizon, alphas, tol)
    return _solution(ring, fields[0], sig.power, a)


def ode_oracle_batch(
    ring: RingParams,
    couplings: Sequence[CouplingSet],
    sig: SignalInput,
    horizon: float | None = None,
    tol: float = 1e-6,
) -> list[FieldSolution]:
    """:func:`ode_oracle` for many coupling sets integrated together."""
    fields, a = _oracle_fields(ring, couplings, horizon, None, tol)
    return [_solution(ring, f, sig.power, a) for f in fields]


def relaxation(ring: RingParams, c: CouplingSet, sig: SignalInput, t):
    """Analytic single-mode signal field ``E_s(t)`` for ``omega0 = 0``."""
    if c.omega0 != 0:
        raise ValueError("analytic relaxation only applies to the unpumped cavity")
    lam = ring.alpha + 1j * c.signal_detuning
    e_inf = 1j * math.sqrt(ring.theta * sig.power) / lam
    return e_inf * (1.0 - np.exp(-lam * np.asarray(t) / ring.round_trip_time))


# ---------------------------------------------------------------------------
# Extended idler basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtendedSolution:
    """Per-order results of the chain-coupled solve.

    ``orders`` runs from ``-K`` to ``K``; order 0 is the signal, ``+1`` the
    blue first-order idler.
    """

    orders: tuple[int, ...]
    efficiencies: tuple[float, ...]
    transmission: float
    dissipated: float
    fields: np.ndarray = field(repr=False, compare=False)

    def efficiency(self, order: int) -> float:
        return self.efficiencies[self.orders.index(order)]

    @property
    def first_order(self) -> float:
        return self.efficiency(1) + self.efficiency(-1)

    @property
    def higher_order(self) -> float:
        return sum(e for n, e in zip(self.orders, self.efficiencies) if abs(n) >= 2)

    @property
    def total_idler(self) -> float:
        return sum(e for n, e in zip(self.orders, self.efficiencies) if n != 0)


def extended_basis_solve(
    ring: RingParams,
    c: CouplingSet,
    sig: SignalInput,
    orders: int,
    extra_detunings: dict[int, float] | None = None,
) -> ExtendedSolution:
    """Steady state of a signal plus ``2K`` idlers coupled in a chain.

    Mode ``n`` sits ``n mu`` modes from the signal and has detuning
    ``d_s + n W1 + n^2 W2`` (the quadratic dispersion model), plus any
    ``extra_detunings[n]``. Neighbouring modes couple through ``W0``. With
    ``K = 1`` this is exactly the three-mode system.
    """
    if not isinstance(orders, (int, np.integer)) or orders < 1:
        raise ValueError(f"number of idler orders must be an integer >= 1, got {orders!r}")
    if orders > MAX_EXTENDED_ORDER:
        raise ValueError(f"orders > {MAX_EXTENDED_ORDER} exceed the dispersion model validity")
    extra = extra_detunings or {}
    n = np.arange(-orders, orders + 1)
    det = c.signal_detuning + n * c.omega1 + n**2 * c.omega2
    det = det + np.array([extra.get(int(k), 0.0) for k in n])
    size = n.size
    m = np.diag(-(ring.alpha + 1j * det))
    idx = np.arange(size - 1)
    m[idx, idx + 1] = 1j * c.omega0
    m[idx + 1, idx] = 1j * c.omega0
    _check_condition(m)
    drive = np.zeros(size, dtype=complex)
    drive[orders] = 1j * math.sqrt(ring.theta)
    fields = np.linalg.solve(m, -drive)
    th = ring.theta
    eff = th * np.abs(fields) ** 2
    remnant = 1.0 + 1j * math.sqrt(th) * fields[orders]
    eff[orders] = 0.0
    dissipated = float(np.sum((2.0 * ring.alpha - th) * np.abs(fields) ** 2))
    return ExtendedSolution(
        orders=tuple(int(k) for k in n),
        efficiencies=tuple(float(e) for e in eff),
        transmission=float(abs(remnant) ** 2),
        dissipated=dissipated,
        fields=fields * math.sqrt(sig.power),
    )


# ---------------------------------------------------------------------------
# Transmission spectra and calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransmissionSpectrum:
    offset_hz: np.ndarray
    transmission: np.ndarray
    fwhm_hz: float


def _half_depth_width(x: np.ndarray, y: np.ndarray, baseline: float) -> float:
    """Width between the outermost half-depth crossings of a dip."""
    i_min = int(np.argmin(y))
    half = 0.5 * (baseline + y[i_min])
    below = y < half
    if not below.any() or below[0] or below[-1]:
        return float("nan")
    idx = np.flatnonzero(below)
    lo, hi = idx[0], idx[-1]

    def cross(i, j):
        return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    return float(cross(hi, hi + 1) - cross(lo - 1, lo))


def transmission_spectrum(ring: RingParams, c: CouplingSet, offsets_hz, sig: SignalInput | None = None) -> TransmissionSpectrum:
    """Signal transmission as the probe laser is scanned by ``offsets_hz``.

    The grid must span at least five loaded linewidths. The reported FWHM is
    measured between half-depth crossings relative to the largest
    transmission on the grid.
    """
    x = np.asarray(offsets_hz, dtype=float)
    if x.size == 0:
        raise ValueError("empty detuning grid")
    if np.ptp(x) < 5.0 * ring.signal.loaded_linewidth:
        raise ValueError("detuning grid must span at least 5 loaded linewidths")
    t = response(ring, c, -ring.detuning(x))["transmission"]
    return TransmissionSpectrum(x, t, _half_depth_width(x, t, float(t.max())))


def dip_fwhm(ring: RingParams, c: CouplingSet, span: float = 12.0) -> float:
    """Transmission-dip FWHM [Hz] located with root finding.

    The asymptotic off-resonance transmission (1) is the baseline.
    """
    lw = ring.signal.loaded_linewidth
    x = np.linspace(-span * lw, span * lw, 4001)
    t = response(ring, c, -ring.detuning(x))["transmission"]
    i_min = int(np.argmin(t))
    x_min = x[i_min]
    if 0 < i_min < x.size - 1:
        x_min = float(
            _refine_min(lambda f: float(response(ring, c, -ring.detuning(f))["transmission"]), x[i_min - 1], x[i_min + 1])
        )
    t_min = float(response(ring, c, -ring.detuning(x_min))["transmission"])
    half = 0.5 * (1.0 + t_min)

    def g(f):
        return float(response(ring, c, -ring.detuning(f))["transmission"]) - half

    below = np.flatnonzero(t < half)
    if below.size == 0:
        return float("nan")
    lo, hi = below[0], below[-1]
    left = brentq(g, x[lo - 1], x[lo], xtol=1e-3)
    right = brentq(g, x[hi], x[hi + 1], xtol=1e-3)
    return right - left


def _refine_min(fun, a, b):
    res = minimize_scalar(fun, bounds=(a, b), method="bounded", options={"xatol": 1e-3})
    return res.x


def optimal_omega0(ring: RingParams) -> float:
    """Coupling that maximizes a first-order idler on perfect matching, alpha / sqrt(2)."""
    return ring.alpha / math.sqrt(2.0)


@dataclass(frozen=True)
class CalibrationTargets:
    """Measured operating point used to pin the couplings.

    Parameters
    ----------
    eta_blue : float
        Narrow-band blue-idler efficiency.
    eta_red : float, optional
        Narrow-band red-idler efficiency.
    pumped_dip_fwhm : float, optional
        Transmission-dip FWHM [Hz] with pumps on.
    branch : {"high", "low"}
        Root used when only ``eta_blue`` is given: ``high`` is the
        over-coupled (strong pump) side of the efficiency maximum.
    """

    eta_blue: float
    eta_red: float | None = None
    pumped_dip_fwhm: float | None = None
    branch: str = "high"

    def __post_init__(self) -> None:
        if self.branch not in ("high", "low"):
            raise ConfigurationError(f"calibration branch must be 'high' or 'low', got {self.branch!r}")
        if not 0 < self.eta_blue < 1:
            raise ConfigurationError("calibration eta_blue must lie in (0, 1)")
        if (self.eta_red is None) != (self.pumped_dip_fwhm is None):
            raise ConfigurationError("eta_red and pumped_dip_fwhm must be given together")


def _omega0_for_efficiency(ring: RingParams, target: float, branch: str) -> float:
    # eta = k^2 x / (1 + 2x)^2 with x = (W0/alpha)^2, k = theta/alpha
    k = ring.theta / ring.alpha
    peak = k**2 / 8.0
    if target > peak:
        raise ConfigurationError(
            f"target efficiency {target:.4f} exceeds the matched maximum {peak:.4f} for this ring"
        )
    roots = np.roots([4.0 * target, 4.0 * target - k**2, target])
    roots = np.sort(np.real(roots))
    x = roots[-1] if branch == "high" else roots[0]
    return ring.alpha * math.sqrt(x)


def calibrate(ring: RingParams, targets: CalibrationTargets) -> CouplingSet:
    """Couplings reproducing a measured narrow-band operating point.

    With only ``eta_blue`` the mismatches are zero and ``omega0`` is found in
    closed form on the requested branch. With all three targets
    ``(omega0, omega1, omega2)`` are fitted jointly; the signal sits on
    resonance (``signal_detuning = 0``).
    """
    w0 = _omega0_for_efficiency(ring, min(targets.eta_blue, ring.theta**2 / (8 * ring.alpha**2)), "high")
    if targets.eta_red is None:
        return CouplingSet(_omega0_for_efficiency(ring, targets.eta_blue, targets.branch))

    a = ring.alpha
    dip_target = targets.pumped_dip_fwhm
    lw = ring.signal.loaded_linewidth

    def residual(p):
        c = CouplingSet(abs(p[0]) * a, p[1] * a, p[2] * a)
        r = response(ring, c)
        return [
            float(r["eta_plus"]) - targets.eta_blue,
            float(r["eta_minus"]) - targets.eta_red,
            (dip_fwhm(ring, c) - dip_target) / lw,
        ]

    # blue better matched than red -> W1 and W2 of opposite sign
    sign = -1.0 if targets.eta_blue >= targets.eta_red else 1.0
    start = [w0 / a, 0.1 * sign, 0.7]
    sol = least_squares(residual, start, x_scale=[0.5, 0.1, 0.5], xtol=1e-12, ftol=1e-12, gtol=1e-12)
    worst = float(np.max(np.abs(sol.fun)))
    if worst > 1e-6:
        raise ConvergenceError("calibration targets could not be matched simultaneously", worst)
    return CouplingSet(abs(sol.x[0]) * a, sol.x[1] * a, sol.x[2] * a)
