"""
Finite-linewidth and pulsed inputs to the frequency converter.

A signal with spectral density ``S(f)`` is treated as a set of independent
cw components; each one is converted with the steady-state response of the
ring and the results are summed. Averaged efficiencies are converted flux
over total input flux, so input flux lying outside the evaluation grid counts
as unconverted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import erf, voigt_profile

from .cmt import CouplingSet, RingParams, response
from .errors import ResolutionError, TruncationError

KINDS = ("delta", "lorentzian", "gaussian", "voigt", "tabulated")
CHANNELS = ("signal", "idler+", "idler-", "remnant", "noise")
CSV_HEADER = ("frequency_hz", "density_per_hz", "channel")
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DEFAULT_POINTS = 2048
DEFAULT_SPAN = 12.0  # loaded linewidths on each side


def voigt_fwhm(lorentzian_fwhm: float, gaussian_fwhm: float) -> float:
    """Olivero-Longbothum approximation of the Voigt FWHM (about 2e-4 relative)."""
    fl, fg = lorentzian_fwhm, gaussian_fwhm
    return 0.5346 * fl + math.sqrt(0.2166 * fl**2 + fg**2)


def gaussian_for_voigt(total_fwhm: float, lorentzian_fwhm: float) -> float:
    """Gaussian component giving a Voigt of ``total_fwhm`` with the given Lorentzian part."""
    rest = (total_fwhm - 0.5346 * lorentzian_fwhm) ** 2 - 0.2166 * lorentzian_fwhm**2
    if rest < 0:
        raise ValueError("Lorentzian component alone exceeds the requested Voigt width")
    return math.sqrt(rest)


@dataclass(frozen=True)
class LineShape:
    """Spectral density of the input signal.

    Use the ``delta``/``lorentzian``/``gaussian``/``voigt``/``tabulated``
    constructors. Frequencies are in Hz, ``flux`` in photons per second.
    Voigt densities come from the Faddeeva function.
    """

    kind: str
    center: float
    flux: float = 1.0
    fwhm: float = 0.0
    lorentzian_fwhm: float = 0.0
    gaussian_fwhm: float = 0.0
    table_frequency: np.ndarray | None = field(default=None, repr=False, compare=False)
    table_density: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown line shape {self.kind!r}")
        if self.flux < 0:
            raise ValueError("flux must be >= 0")
        if self.kind in ("lorentzian", "gaussian") and not self.fwhm > 0:
            raise ValueError(f"{self.kind} line needs a positive FWHM")
        if self.kind == "voigt" and not (self.lorentzian_fwhm >= 0 and self.gaussian_fwhm >= 0
                                         and self.lorentzian_fwhm + self.gaussian_fwhm > 0):
            raise ValueError("voigt line needs non-negative components, not both zero")
        if self.kind == "tabulated":
            f = np.asarray(self.table_frequency, dtype=float)
            d = np.asarray(self.table_density, dtype=float)
            if f.ndim != 1 or f.shape != d.shape or f.size < 2:
                raise ValueError("tabulated line needs matching 1-D frequency and density arrays")
            if np.any(np.diff(f) <= 0) or np.any(d < 0):
                raise ValueError("tabulated grid must increase strictly and densities be >= 0")
            object.__setattr__(self, "table_frequency", f)
            object.__setattr__(self, "table_density", d)

    @classmethod
    def delta(cls, center: float, flux: float = 1.0) -> "LineShape":
        return cls("delta", center, flux)

    @classmethod
    def lorentzian(cls, center: float, fwhm: float, flux: float = 1.0) -> "LineShape":
        return cls("lorentzian", center, flux, fwhm=fwhm)

    @classmethod
    def gaussian(cls, center: float, fwhm: float, flux: float = 1.0) -> "LineShape":
        return cls("gaussian", center, flux, fwhm=fwhm)

    @classmethod
    def voigt(cls, center: float, lorentzian_fwhm: float, gaussian_fwhm: float, flux: float = 1.0) -> "LineShape":
        return cls("voigt", center, flux, lorentzian_fwhm=lorentzian_fwhm, gaussian_fwhm=gaussian_fwhm)

    @classmethod
    def tabulated(cls, frequency, density, center: float | None = None) -> "LineShape":
        """Line shape from samples; ``flux`` is the cell sum of the samples."""
        f = np.asarray(frequency, dtype=float)
        d = np.asarray(density, dtype=float)
        widths = _cell_widths(f)
        if center is None:
            center = float(f[np.argmax(d)])
        return cls("tabulated", center, float(np.sum(d * widths)), table_frequency=f, table_density=d)

    @property
    def width(self) -> float:
        """Characteristic FWHM [Hz] (zero for a delta)."""
        if self.kind == "voigt":
            return voigt_fwhm(self.lorentzian_fwhm, self.gaussian_fwhm)
        if self.kind == "tabulated":
            return _direct_fwhm(self.table_frequency, self.table_density)
        return self.fwhm

    def density(self, f) -> np.ndarray:
        """Spectral density [photons/s/Hz] at absolute frequencies ``f``."""
        x = np.asarray(f, dtype=float) - self.center
        if self.kind == "lorentzian":
            g = 0.5 * self.fwhm
            return self.flux * g / (math.pi * (x**2 + g**2))
        if self.kind == "gaussian":
            s = self.fwhm * FWHM_TO_SIGMA
            return self.flux * np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        if self.kind == "voigt":
            return self.flux * voigt_profile(x, self.gaussian_fwhm * FWHM_TO_SIGMA, 0.5 * self.lorentzian_fwhm)
        if self.kind == "tabulated":
            return np.interp(f, self.table_frequency, self.table_density, left=0.0, right=0.0)
        return np.zeros_like(x)

    def cdf(self, f) -> np.ndarray:
        """Fraction of the flux below ``f``."""
        x = np.asarray(f, dtype=float) - self.center
        if self.kind == "delta":
            return (x >= 0).astype(float)
        if self.kind == "lorentzian":
            return 0.5 + np.arctan(x / (0.5 * self.fwhm)) / math.pi
        if self.kind == "gaussian":
            return 0.5 * (1.0 + erf(x / (self.fwhm * FWHM_TO_SIGMA * math.sqrt(2.0))))
        if self.kind == "voigt":
            return np.interp(x, self._voigt_table[0], self._voigt_table[1], left=0.0, right=1.0)
        edges = _cell_edges(self.table_frequency)
        cum = np.concatenate([[0.0], np.cumsum(self.table_density * np.diff(edges))])
        total = cum[-1] if cum[-1] > 0 else 1.0
        return np.interp(f, edges, cum / total, left=0.0, right=1.0)

    @cached_property
    def _voigt_table(self) -> tuple[np.ndarray, np.ndarray]:
        # sinh-spaced grid resolves the core for any width and reaches far tails
        fl, fg = self.lorentzian_fwhm, self.gaussian_fwhm
        w = 0.5 * voigt_fwhm(fl, fg)
        reach = 1e4 * w
        u = np.linspace(-math.asinh(reach / w), math.asinh(reach / w), 40001)
        x = w * np.sinh(u)
        dens = voigt_profile(x, fg * FWHM_TO_SIGMA, 0.5 * fl)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
        if fl > 0:
            tail = 0.5 - math.atan(reach / (0.5 * fl)) / math.pi
        else:
            tail = 0.0
        cum = tail + cum
        cum = cum / (cum[-1] + tail)
        return x, cum

    def cell_fractions(self, f: np.ndarray) -> np.ndarray:
        """Flux fraction falling in the cell around each grid point."""
        edges = _cell_edges(f)
        if self.kind == "delta":
            out = np.zeros(f.size)
            if edges[0] <= self.center < edges[-1]:
                out[np.searchsorted(edges, self.center, side="right") - 1] = 1.0
            return out
        return np.diff(self.cdf(edges))


def _cell_edges(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    mid = 0.5 * (f[1:] + f[:-1])
    return np.concatenate([[f[0] - (mid[0] - f[0])], mid, [f[-1] + (f[-1] - mid[-1])]])


def _cell_widths(f: np.ndarray) -> np.ndarray:
    return np.diff(_cell_edges(f))


def _direct_fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """FWHM between the outermost half-maximum crossings (linear interpolation)."""
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    above = np.flatnonzero(y >= half)
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == y.size - 1:
        return float("nan")
    left = x[lo - 1] + (half - y[lo - 1]) * (x[lo] - x[lo - 1]) / (y[lo] - y[lo - 1])
    right = x[hi] + (half - y[hi]) * (x[hi + 1] - x[hi]) / (y[hi + 1] - y[hi])
    return float(right - left)


@dataclass(frozen=True)
class Spectrum:
    """Sampled spectral density of one channel.

    ``captured_fraction`` records how much of the source flux lies inside
    the grid; the remainder sits in tails beyond it.
    """

    frequency: np.ndarray
    density: np.ndarray
    channel: str = "signal"
    center: float = 0.0
    captured_fraction: float = 1.0

    def __post_init__(self) -> None:
        f = np.asarray(self.frequency, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if f.ndim != 1 or f.shape != d.shape or f.size < 1:
            raise ValueError("spectrum needs matching 1-D frequency and density arrays")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("spectrum frequency grid must increase strictly")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "density", d)

    def integral(self) -> float:
        """Trapezoidal flux on the grid [photons/s]."""
        return float(np.trapezoid(self.density, self.frequency))

    def fwhm(self) -> float:
        return _direct_fwhm(self.frequency, self.density)

    def rows(self) -> Iterable[tuple[str, str, str]]:
        for f, d in zip(self.frequency, self.density):
            yield (repr(float(f)), repr(float(d)), self.channel)


def spectra_to_csv(spectra: Iterable[Spectrum]) -> str:
    """CSV text with header ``frequency_hz,density_per_hz,channel``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in spectra:
        writer.writerows(s.rows())
    return buf.getvalue()


def write_spectra(path: str | Path, spectra: Iterable[Spectrum]) -> None:
    Path(path).write_text(spectra_to_csv(spectra))


def read_spectrum(path: str | Path, channel: str | None = None) -> Spectrum:
    """Read one channel back from a spectrum CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        rows = [r for r in reader if channel is None or r["channel"] == channel]
    if not rows:
        raise ValueError("no rows for the requested channel")
    f = np.array([float(r["frequency_hz"]) for r in rows])
    d = np.array([float(r["density_per_hz"]) for r in rows])
    return Spectrum(f, d, rows[0]["channel"], center=float(f[np.argmax(d)]))


# ---------------------------------------------------------------------------
# Sampling and averaging
# ---------------------------------------------------------------------------


def default_grid(ring: RingParams, center: float, points: int = DEFAULT_POINTS, span: float = DEFAULT_SPAN) -> np.ndarray:
    """Uniform grid of ``points`` samples over +/- ``span`` loaded linewidths."""
    half = span * ring.signal.loaded_linewidth
    return center + np.linspace(-half, half, points)


def sample(shape: LineShape, grid, channel: str = "signal") -> Spectrum:
    """Sample a line shape on ``grid`` [Hz].

    Named shapes need a grid spanning at least ten FWHM. A delta is placed in
    the nearest bin with density ``flux / bin width`` so the trapezoidal
    integral returns the flux.
    """
    f = np.asarray(grid, dtype=float)
    if f.size < 2:
        raise ValueError("sampling grid needs at least two points")
    edges = _cell_edges(f)
    captured = float(np.clip(shape.cdf(edges[-1]) - shape.cdf(edges[0]), 0.0, 1.0))
    if shape.kind == "delta":
        if not edges[0] <= shape.center < edges[-1]:
            raise TruncationError("delta line lies outside the grid", 0.0)
        d = np.zeros(f.size)
        k = int(np.argmin(np.abs(f - shape.center)))
        weights = np.zeros(f.size)
        weights[k] = 1.0
        d[k] = shape.flux / float(np.trapezoid(weights, f))
        return Spectrum(f, d, channel, shape.center, 1.0)
    if shape.kind != "tabulated" and np.ptp(f) < 10.0 * shape.width:
        raise TruncationError(f"grid spans {np.ptp(f):.4g} Hz, less than 10 FWHM", captured)
    return Spectrum(f, shape.density(f), channel, shape.center, captured)


@dataclass(frozen=True)
class AveragedEfficiency:
    """Flux-weighted channel fractions of a finite-linewidth input."""

    blue: float
    red: float
    transmission: float
    dissipated: float
    outside: float

    @property
    def total(self) -> float:
        return self.blue + self.red + self.transmission + self.dissipated + self.outside


def _detuning_shift(ring: RingParams, f: np.ndarray, center: float) -> np.ndarray:
    # a component above the carrier sees a smaller (resonance - laser) detuning
    return -ring.detuning(np.asarray(f) - center)


def avg_conversion_efficiency(
    ring: RingParams,
    c: CouplingSet,
    shape: LineShape,
    grid=None,
) -> AveragedEfficiency:
    """Average each output channel over the input spectrum.

    ``c`` holds the couplings for a component at ``shape.center``; other
    components see detunings shifted by their offset. Each grid point carries
    the exact flux of its cell (from the line-shape CDF), so widths far below
    the grid spacing are handled. Flux outside the grid is reported as
    ``outside`` and is not converted.
    """
    if shape.kind == "delta":
        r = response(ring, c)
        return AveragedEfficiency(float(r["eta_plus"]), float(r["eta_minus"]), float(r["transmission"]),
                                  float(r["dissipated"]), 0.0)
    if shape.kind == "tabulated":
        f = shape.table_frequency
        w = shape.table_density * _cell_widths(f)
        w = w / w.sum()
    else:
        f = default_grid(ring, shape.center) if grid is None else np.asarray(grid, dtype=float)
        w = shape.cell_fractions(f)
    r = response(ring, c, _detuning_shift(ring, f, shape.center))
    # fixed-order summation keeps results independent of evaluation order
    return AveragedEfficiency(
        blue=float(np.sum(r["eta_plus"] * w)),
        red=float(np.sum(r["eta_minus"] * w)),
        transmission=float(np.sum(r["transmission"] * w)),
        dissipated=float(np.sum(r["dissipated"] * w)),
        outside=float(max(0.0, 1.0 - np.sum(w))),
    )


def _filtered(ring, c, spec: Spectrum, key: str, channel: str, shift_hz: float) -> Spectrum:
    r = response(ring, c, _detuning_shift(ring, spec.frequency, spec.center))
    return Spectrum(spec.frequency + shift_hz, r[key] * spec.density, channel, spec.center + shift_hz,
                    spec.captured_fraction)


def idler_spectrum(ring: RingParams, c: CouplingSet, spec: Spectrum, channel: str = "idler+", shift_hz: float = 0.0) -> Spectrum:
    """Converted idler density ``eta(f) S(f)``, optionally moved by ``shift_hz``.

    ``c`` applies at ``spec.center``. Use :meth:`Spectrum.fwhm` or
    :func:`qfcring.photonstats.fit_linewidth` for the output width.
    """
    if channel not in ("idler+", "idler-"):
        raise ValueError("idler channel must be 'idler+' or 'idler-'")
    if spec.channel != "signal":
        raise ValueError("idler spectrum needs a signal-channel input")
    key = "eta_plus" if channel == "idler+" else "eta_minus"
    return _filtered(ring, c, spec, key, channel, shift_hz)


def remnant_spectrum(ring: RingParams, c: CouplingSet, spec: Spectrum) -> Spectrum:
    """Unconverted signal ``T_s(f) S(f)``."""
    if spec.channel != "signal":
        raise ValueError("remnant spectrum needs a signal-channel input")
    return _filtered(ring, c, spec, "transmission", "remnant", 0.0)


def dissipated_density(ring: RingParams, c: CouplingSet, spec: Spectrum) -> np.ndarray:
    """Density of flux lost inside the ring, on the input grid."""
    r = response(ring, c, _detuning_shift(ring, spec.frequency, spec.center))
    return r["dissipated"] * spec.density


# ---------------------------------------------------------------------------
# Pulses
# ---------------------------------------------------------------------------

ENVELOPES = ("gaussian", "sech", "exponential", "tabulated")
MIN_SAMPLES_PER_DURATION = 64


@dataclass(frozen=True)
class PulseShape:
    """Temporal intensity envelope of a pulse train.

    ``duration`` is the intensity FWHM for ``gaussian``/``sech`` and the
    intensity 1/e decay time for the one-sided ``exponential``. A
    ``tabulated`` envelope gives intensity samples spaced by ``sample_step``.
    """

    envelope: str
    duration: float
    rep_rate: float
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)
    sample_step: float | None = None

    def __post_init__(self) -> None:
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if not (self.duration > 0 and self.rep_rate > 0):
            raise ValueError("pulse duration and repetition rate must be positive")
        if self.envelope == "tabulated" and (self.samples is None or self.sample_step is None):
            raise ValueError("tabulated envelope needs samples and sample_step")

    def intensity(self, t: np.ndarray) -> np.ndarray:
        d = self.duration
        if self.envelope == "gaussian":
            return np.exp(-4.0 * math.log(2.0) * (t / d) ** 2)
        if self.envelope == "sech":
            tau = d / (2.0 * math.acosh(math.sqrt(2.0)))
            # sech^2 written with exp(-2|x|) so large |x| underflows instead of overflowing
            e = np.exp(-2.0 * np.abs(t / tau))
            return 4.0 * e / (1.0 + e) ** 2
        if self.envelope == "exponential":
            return np.where(t >= 0, np.exp(-np.clip(t, 0, None) / d), 0.0)
        raise ValueError("tabulated envelopes have no closed form")


def pulse_to_spectrum(p: PulseShape, carrier: float, flux: float = 1.0) -> LineShape:
    """Transform-limited spectrum of a pulse train as a tabulated line.

    The field envelope ``sqrt(I(t))`` over one repetition period is Fourier
    transformed; its power spectrum gives lines spaced by the repetition
    rate, normalized to ``flux``.
    """
    period = 1.0 / p.rep_rate
    if p.envelope == "tabulated":
        inten = np.asarray(p.samples, dtype=float)
        dt = float(p.sample_step)
        if p.duration / dt < MIN_SAMPLES_PER_DURATION:
            raise ResolutionError(
                f"envelope has {p.duration / dt:.1f} samples per duration; need {MIN_SAMPLES_PER_DURATION}"
            )
        n = max(inten.size, int(round(period / dt)))
        field_t = np.zeros(n)
        field_t[: inten.size] = np.sqrt(np.clip(inten, 0, None))
    else:
        n = 1 << int(math.ceil(math.log2(period / (p.duration / (2 * MIN_SAMPLES_PER_DURATION)))))
        dt = period / n
        t = (np.arange(n) - (0 if p.envelope == "exponential" else n // 2)) * dt
        field_t = np.sqrt(p.intensity(t))
    if p.duration / dt < MIN_SAMPLES_PER_DURATION:
        raise ResolutionError("pulse duration is under-resolved over one repetition period")
    power = np.abs(np.fft.fftshift(np.fft.fft(field_t))) ** 2
    k = np.arange(n) - n // 2
    lines = carrier + k * p.rep_rate
    weights = power / power.sum() * flux
    return LineShape.tabulated(lines, weights / p.rep_rate, center=carrier)
