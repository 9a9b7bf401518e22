"""
Photon statistics: second-order correlation fits, noise mixing and
the converter noise budget, plus line-width and coherence fits.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT, h as PLANCK
from scipy.optimize import OptimizeWarning, curve_fit, least_squares
from scipy.special import voigt_profile

from .errors import FitError, MixingError, NormalizationError, ResolutionError
from .spectral import FWHM_TO_SIGMA, Spectrum, voigt_fwhm

DEFAULT_BIN = 128e-12
DEFAULT_RESTARTS = 8
MIN_BINS = 50


# ---------------------------------------------------------------------------
# g2 model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class G2Model:
    """Double-exponential antibunching model.

    ``g2(tau) = 1 + a1 exp(-gamma1 |tau|) + a2 exp(-gamma2 |tau|)`` with
    ``a1 + a2 = -1``. Rates are in 1/s.
    """

    a1: float
    a2: float
    gamma1: float
    gamma2: float

    def __post_init__(self) -> None:
        if abs(self.a1 + self.a2 + 1.0) > 1e-9:
            raise ValueError(f"G2Model invariant violated: a1 + a2 = {self.a1 + self.a2}, must be -1")
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("G2Model invariant violated: rates must be > 0")

    @classmethod
    def constrained(cls, a1: float, gamma1: float, gamma2: float) -> "G2Model":
        return cls(a1, -1.0 - a1, gamma1, gamma2)

    def __call__(self, tau) -> np.ndarray:
        return g2_eval(self, tau)


def g2_eval(m: G2Model, tau) -> np.ndarray:
    t = np.abs(np.asarray(tau, dtype=float))
    return 1.0 + m.a1 * np.exp(-m.gamma1 * t) + m.a2 * np.exp(-m.gamma2 * t)


def _exp_bin_average(gamma: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # antiderivative of exp(-g|x|) is sign(x) (1 - exp(-g|x|)) / g
    def prim(x):
        return np.sign(x) * -np.expm1(-gamma * np.abs(x)) / gamma

    return (prim(hi) - prim(lo)) / (hi - lo)


def g2_binned(m: G2Model, centers, width: float) -> np.ndarray:
    """Model averaged over rectangular bins of ``width`` centered at ``centers``."""
    c = np.asarray(centers, dtype=float)
    lo, hi = c - 0.5 * width, c + 0.5 * width
    return 1.0 + m.a1 * _exp_bin_average(m.gamma1, lo, hi) + m.a2 * _exp_bin_average(m.gamma2, lo, hi)


# ---------------------------------------------------------------------------
# Histograms and fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Start-stop coincidence counts on uniform delay bins [s]."""

    tau: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.tau, dtype=float)
        n = np.asarray(self.counts, dtype=float)
        if t.ndim != 1 or t.shape != n.shape or t.size < 2:
            raise ValueError("histogram needs matching 1-D delay and count arrays")
        d = np.diff(t)
        if not np.all(d > 0) or np.ptp(d) > 1e-6 * d.mean():
            raise ValueError("histogram bins must be uniformly spaced and increasing")
        if np.any(n < 0):
            raise ValueError("counts must be >= 0")
        object.__setattr__(self, "tau", t)
        object.__setattr__(self, "counts", n)

    @property
    def bin_width(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.tau)))


def synthesize_histogram(
    model: G2Model,
    plateau_counts: float,
    rng: np.random.Generator,
    bins: int = 201,
    bin_width: float = DEFAULT_BIN,
    signal_fraction: float = 1.0,
) -> CoincidenceHistogram:
    """Poisson-sampled histogram of ``model`` with a given plateau level.

    ``signal_fraction`` below 1 mixes in uncorrelated background, which
    lifts the zero-delay value as in :func:`mix_with_noise`.
    """
    if not 0.0 <= signal_fraction <= 1.0:
        raise ValueError("signal fraction must lie in [0, 1]")
    tau = (np.arange(bins) - bins // 2) * bin_width
    mean = plateau_counts * (1.0 + signal_fraction**2 * (g2_binned(model, tau, bin_width) - 1.0))
    return CoincidenceHistogram(tau, rng.poisson(mean).astype(float))


@dataclass(frozen=True)
class G2Fit:
    """Outcome of :func:`fit_g2`.

    ``g2_zero_datum`` is the normalized zero-delay bin, reported instead of
    the model value; ``g2_zero_error`` comes from plateau fluctuations.
    """

    model: G2Model
    uncertainties: dict
    g2_zero_datum: float
    g2_zero_error: float
    normalization: float
    cost: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": "double_exponential",
            "params": {k: float(v) for k, v in asdict(self.model).items()},
            "uncertainties": {k: float(v) for k, v in self.uncertainties.items()},
            "g2_zero_datum": self.g2_zero_datum,
            "g2_zero_error": self.g2_zero_error,
            "normalization": self.normalization,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plateau(h: CoincidenceHistogram, min_delay: float) -> np.ndarray:
    mask = np.abs(h.tau) >= min_delay
    vals = h.counts[mask]
    if vals.size < 2 or vals.mean() <= 0:
        raise NormalizationError("no populated plateau bins for normalization")
    return vals


def _seed_rate(h: CoincidenceHistogram, g: np.ndarray) -> float:
    # delay where the dip has recovered to 1/e of its depth
    depth = 1.0 - g[h.zero_index()]
    if depth <= 0:
        return 1.0 / (10 * h.bin_width)
    right = h.tau >= 0
    t, gr = h.tau[right], g[right]
    recovered = np.flatnonzero(1.0 - gr <= depth / math.e)
    t_e = t[recovered[0]] if recovered.size else t[-1] / 3
    return 1.0 / max(t_e, h.bin_width)


def fit_g2(
    h: CoincidenceHistogram,
    rng: np.random.Generator | None = None,
    restarts: int = DEFAULT_RESTARTS,
    plateau_delay: float | None = None,
) -> G2Fit:
    """Constrained double-exponential fit of a coincidence histogram.

    Counts are normalized by the plateau mean, taken over bins beyond five
    slow time constants of the fit (or over the outer quarter of the window
    before the first fit, or at ``plateau_delay`` if given). The model is
    averaged over each bin. Restarts draw from ``rng``.
    """
    if h.tau.size < MIN_BINS:
        raise ResolutionError(f"histogram has {h.tau.size} bins; need at least {MIN_BINS}")
    rng = np.random.default_rng(0) if rng is None else rng
    edge = plateau_delay if plateau_delay is not None else 0.75 * np.max(np.abs(h.tau))
    notes: list[str] = []

    def run(norm: float):
        g = h.counts / norm
        sig = np.sqrt(np.maximum(h.counts, 1.0)) / norm
        gamma0 = _seed_rate(h, g)

        def resid(p):
            m = G2Model.constrained(p[0], math.exp(p[1]), math.exp(p[2]))
            return (g2_binned(m, h.tau, h.bin_width) - g) / sig

        # rates stay between a tenth of the inverse window and ten inverse bins
        lo_rate = math.log(0.1 / np.max(np.abs(h.tau)))
        hi_rate = math.log(10.0 / h.bin_width)
        starts = [np.array([-1.0, math.log(gamma0), math.log(gamma0 / 10)])]
        for _ in range(restarts - 1):
            starts.append(np.array([
                rng.uniform(-1.5, 0.5),
                math.log(gamma0) + rng.normal(0.0, 1.0),
                math.log(gamma0) + rng.normal(0.0, 1.5),
            ]))
        starts = [np.concatenate([s[:1], np.clip(s[1:], lo_rate + 1e-6, hi_rate - 1e-6)]) for s in starts]
        best = None
        for s in starts:
            try:
                r = least_squares(resid, s, bounds=([-3.0, lo_rate, lo_rate], [2.0, hi_rate, hi_rate]), x_scale=[0.5, 1, 1])
            except (ValueError, FloatingPointError):
                continue
            if r.success and (best is None or r.cost < best.cost):
                best = r
        if best is None:
            raise FitError("g2 fit did not converge after bounded restarts", resid(starts[0]))
        return best

    plat = _plateau(h, edge)
    norm = float(plat.mean())
    best = run(norm)
    slow = min(math.exp(best.x[1]), math.exp(best.x[2]))
    if plateau_delay is None:
        try:
            plat = _plateau(h, 5.0 / slow)
            norm = float(plat.mean())
            best = run(norm)
        except NormalizationError:
            notes.append("plateau beyond 5/min(gamma) is empty; used outer quarter of the window")

    a1, lg1, lg2 = best.x
    model = G2Model.constrained(a1, math.exp(lg1), math.exp(lg2))
    # order so gamma1 is the fast component
    if model.gamma1 < model.gamma2:
        model = G2Model(model.a2, model.a1, model.gamma2, model.gamma1)
        lg1, lg2 = lg2, lg1
        swap = True
    else:
        swap = False
    unc = _param_errors(best, swap)
    if abs(model.a1) < 1e-3 or abs(model.a2) < 1e-3 or np.isclose(h.counts[h.zero_index()] / norm, 1.0, atol=0.05):
        notes.append("antibunching amplitude near zero: data are consistent with a Poissonian source")
    if notes:
        for n in notes:
            warnings.warn(n, RuntimeWarning, stacklevel=2)
    datum = float(h.counts[h.zero_index()] / norm)
    rel = float(plat.std(ddof=1) / plat.mean())
    err = math.sqrt(rel**2 + (datum * rel) ** 2 / plat.size)
    return G2Fit(model, unc, datum, err, norm, float(best.cost), tuple(notes))


def _param_errors(res, swap: bool) -> dict:
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    sd = np.sqrt(np.abs(np.diag(cov)))
    g1, g2 = math.exp(res.x[1]), math.exp(res.x[2])
    out = {"a1": float(sd[0]), "a2": float(sd[0]), "gamma1": float(g1 * sd[1]), "gamma2": float(g2 * sd[2])}
    if swap:
        out["gamma1"], out["gamma2"] = out["gamma2"], out["gamma1"]
    return out


def pulsed_g2(h: CoincidenceHistogram, period: float, window: float, side_peaks: int = 4) -> tuple[float, float]:
    """Peak-area ratio for pulsed excitation.

    Counts within ``+/- window/2`` of zero delay are divided by the mean area
    of ``side_peaks`` peaks on each side at multiples of ``period``. Returns
    the ratio and its Poisson uncertainty.
    """
    def area(t0):
        return float(h.counts[np.abs(h.tau - t0) <= 0.5 * window].sum())

    center = area(0.0)
    sides = [area(k * period) for k in range(-side_peaks, side_peaks + 1) if k != 0]
    sides = [s for s in sides if s > 0]
    if not sides:
        raise NormalizationError("no side peaks inside the histogram window")
    mean = float(np.mean(sides))
    ratio = center / mean
    err = ratio * math.sqrt(1.0 / max(center, 1.0) + 1.0 / (mean * len(sides)))
    return ratio, err


# ---------------------------------------------------------------------------
# Noise mixing and budget
# ---------------------------------------------------------------------------


def mix_with_noise(g2_source: float, rho: float) -> float:
    """Zero-delay g2 after adding Poissonian background.

    ``rho`` is the signal share of the detected flux.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("signal fraction must lie in [0, 1]")
    if g2_source < 0:
        raise ValueError("source g2 must be >= 0")
    return 1.0 + rho**2 * (g2_source - 1.0)


def signal_fraction(g2_source: float, g2_measured: float) -> float:
    """Signal fraction that turns ``g2_source`` into ``g2_measured``."""
    lo, hi = sorted((g2_source, 1.0))
    # small slack absorbs rounding from a forward mix
    if not lo - 1e-12 <= g2_measured <= hi + 1e-12:
        raise MixingError(f"measured g2 {g2_measured} outside [{lo}, {hi}]: no background fraction reproduces it")
    if g2_source == 1.0:
        raise MixingError("a Poissonian source leaves the signal fraction undetermined")
    return min(math.sqrt(max((1.0 - g2_measured) / (1.0 - g2_source), 0.0)), 1.0)


def antibunching_threshold(g2_source: float, limit: float = 0.5) -> float:
    """Smallest signal fraction keeping the mixed g2 below ``limit``."""
    return signal_fraction(g2_source, limit)


def photon_energy(wavelength: float) -> float:
    if not wavelength > 0:
        raise ValueError("wavelength must be > 0")
    return PLANCK * C_LIGHT / wavelength


@dataclass(frozen=True)
class NoiseBudget:
    """Converter noise in one channel and the resulting signal-to-noise ratio."""

    noise_power: float
    wavelength: float
    flux: float
    rep_rate: float
    time_bin: float
    noise_per_pulse: float
    signal_per_pulse: float
    efficiency: float
    snr: float

    def power_from_flux(self) -> float:
        return self.flux * photon_energy(self.wavelength)


def noise_budget(
    noise_power: float,
    wavelength: float,
    rep_rate: float,
    time_bin: float,
    signal_per_pulse: float,
    efficiency: float,
) -> NoiseBudget:
    """Noise flux, noise photons per detection bin and SNR."""
    for name, v in (("noise power", noise_power), ("repetition rate", rep_rate), ("time bin", time_bin),
                    ("signal photons per pulse", signal_per_pulse), ("efficiency", efficiency)):
        if not v > 0:
            raise ValueError(f"{name} must be > 0")
    flux = noise_power / photon_energy(wavelength)
    per_pulse = flux * time_bin
    return NoiseBudget(noise_power, wavelength, flux, rep_rate, time_bin, per_pulse, signal_per_pulse,
                       efficiency, signal_per_pulse * efficiency / per_pulse)


# ---------------------------------------------------------------------------
# Line-width and coherence fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinewidthFit:
    model: str
    fwhm: float
    fwhm_error: float
    center: float
    params: dict = field(default_factory=dict)


def _lorentz(f, area, f0, w):
    g = 0.5 * w
    return area * g / (math.pi * ((f - f0) ** 2 + g**2))


def _voigt(f, area, f0, wl, wg):
    return area * voigt_profile(f - f0, abs(wg) * FWHM_TO_SIGMA, 0.5 * abs(wl))


def fit_linewidth(spec: Spectrum | tuple, model: str = "lorentzian", sigma=None) -> LinewidthFit:
    """Least-squares line-shape fit returning the FWHM and its 1-sigma error.

    With ``sigma`` given, errors are absolute; otherwise the covariance is
    scaled by the residual variance.
    """
    if isinstance(spec, Spectrum):
        f, y = spec.frequency, spec.density
    else:
        f, y = (np.asarray(a, dtype=float) for a in spec)
    i = int(np.argmax(y))
    if np.count_nonzero(y >= 0.5 * y[i]) < 3:
        raise ResolutionError("fewer than three samples above half maximum")
    f0 = f[i]
    above = f[y >= 0.5 * y[i]]
    w0 = max(float(above[-1] - above[0]), float(np.min(np.diff(f))))
    scale = float(y[i]) * w0
    # work in units of the rough width to keep the Jacobian well scaled
    x = (f - f0) / w0
    yy = y / y[i]
    s = None if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float) / y[i], f.shape)
    absolute = sigma is not None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        return _fit_line(x, yy, s, absolute, model, f0, w0, scale)


def _fit_line(x, yy, s, absolute, model, f0, w0, scale) -> LinewidthFit:
    try:
        if model == "lorentzian":
            p, cov = curve_fit(_lorentz, x, yy, p0=[math.pi / 2, 0.0, 1.0], sigma=s, absolute_sigma=absolute, maxfev=20000)
            fwhm = abs(p[2]) * w0
            err = math.sqrt(cov[2, 2]) * w0
            params = {"area": p[0] * scale, "lorentzian_fwhm": fwhm}
        elif model == "voigt":
            p, cov = curve_fit(_voigt, x, yy, p0=[1.0, 0.0, 0.5, 0.5], sigma=s, absolute_sigma=absolute, maxfev=20000)
            wl, wg = abs(p[2]), abs(p[3])
            fwhm = voigt_fwhm(wl, wg) * w0
            eps = 1e-6
            grad = np.array([
                (voigt_fwhm(wl + eps, wg) - voigt_fwhm(wl - eps, wg)) / (2 * eps),
                (voigt_fwhm(wl, wg + eps) - voigt_fwhm(wl, wg - eps)) / (2 * eps),
            ])
            err = math.sqrt(max(float(grad @ cov[2:, 2:] @ grad), 0.0)) * w0
            params = {"area": p[0] * scale, "lorentzian_fwhm": wl * w0, "gaussian_fwhm": wg * w0}
        else:
            raise ValueError(f"unknown line model {model!r}")
    except RuntimeError as exc:
        raise FitError(f"line-shape fit failed: {exc}") from exc
    if not np.isfinite(err):
        # an exact fit leaves no residual to scale the covariance
        err = 0.0
    return LinewidthFit(model, float(fwhm), float(err), float(f0 + p[1] * w0), params)


@dataclass(frozen=True)
class CoherenceFit:
    tau_c: float
    tau_c_error: float
    fwhm: float
    fwhm_error: float


def fit_coherence(delay, visibility, sigma=None) -> CoherenceFit:
    """Fit ``V = exp(-|tau|/tau_c)``; the equivalent Lorentzian FWHM is ``1/(pi tau_c)``."""
    t = np.abs(np.asarray(delay, dtype=float))
    v = np.asarray(visibility, dtype=float)
    if t.size < 5:
        raise ResolutionError("coherence fit needs at least five delay points")
    span = float(t.max())
    if span <= 0:
        raise ResolutionError("delays must not all be zero")
    guess_v = v[t > 0]
    guess = span / max(-math.log(max(min(guess_v.min(), 0.99), 1e-6)), 1e-3) if guess_v.size else span

    def model(x, tc):
        return np.exp(-x / tc)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            p, cov = curve_fit(model, t / span, v, p0=[guess / span], sigma=sigma,
                           absolute_sigma=sigma is not None, bounds=(1e-9, np.inf), maxfev=10000)
    except RuntimeError as exc:
        raise FitError(f"coherence fit failed: {exc}") from exc
    tc = float(p[0] * span)
    if tc > 100 * span:
        raise FitError("visibility does not decay over the sampled delays", v - model(t / span, p[0]))
    tc_err = float(math.sqrt(cov[0, 0]) * span) if np.isfinite(cov[0, 0]) else 0.0
    fwhm = 1.0 / (math.pi * tc)
    return CoherenceFit(tc, tc_err, fwhm, fwhm * tc_err / tc)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def _read_two_columns(path: str | Path, header: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise ValueError(f"expected header {','.join(header)}")
        rows = [(float(a), float(b)) for a, b in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def read_histogram(path: str | Path) -> CoincidenceHistogram:
    """Read a ``tau_s,counts`` CSV."""
    return CoincidenceHistogram(*_read_two_columns(path, ("tau_s", "counts")))


def write_histogram(path: str | Path, h: CoincidenceHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tau_s", "counts"))
        for t, n in zip(h.tau, h.counts):
            w.writerow((repr(float(t)), int(n)))


def read_visibility(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``delay_s,visibility`` CSV."""
    return _read_two_columns(path, ("delay_s", "visibility"))
