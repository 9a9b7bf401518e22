"""
Figure sweeps, the efficiency budget and deterministic output emission.

Every ``run_*`` function is a pure function of the configuration (and seed
where randomness enters) and returns a :class:`Result` whose rows are in
configured sweep order, however the points were evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.constants import c as C_LIGHT

from . import photonstats as ps
from .cmt import (
    CouplingSet,
    RingParams,
    SignalInput,
    calibrate,
    dip_fwhm,
    extended_basis_solve,
    ode_oracle,
    omega0,
    pump_buildup,
    response,
    steady_state,
    transmission_spectrum,
)
from .config import RunConfig
from .dispersion import DispersionModel, ModeAssignment, detunings, mode_frequency, translation_range
from .errors import ConfigurationError
from .spectral import (
    CSV_HEADER as SPECTRUM_HEADER,
    LineShape,
    Spectrum,
    avg_conversion_efficiency,
    default_grid,
    gaussian_for_voigt,
    idler_spectrum,
    remnant_spectrum,
    sample,
)

TWO_PI = 2.0 * math.pi


@dataclass
class Result:
    """Tabular output of one subcommand plus a JSON-able summary."""

    name: str
    header: tuple[str, ...]
    rows: list[tuple]
    summary: dict = field(default_factory=dict)


def _map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Operating point
# ---------------------------------------------------------------------------


def signal_frequency(cfg: RunConfig) -> float:
    """Signal carrier [Hz], on the reference resonance."""
    return cfg.dispersion.signal.reference_frequency


def _dispersion_couplings(cfg: RunConfig, disp: DispersionModel, ring: RingParams, m_s: int, mu: int, w0: float) -> CouplingSet:
    m1 = disp.pump.reference_mode
    wp1 = mode_frequency(disp, "pump", m1)
    wp2 = mode_frequency(disp, "pump", m1 + mu)
    ws = mode_frequency(disp, "signal", m_s)
    assignment = ModeAssignment(m_s, m1, m1 + mu, m_s + mu, m_s - mu)
    pumps = replace(cfg.pumps, frequency1=wp1, frequency2=wp2, mode1=m1, mode2=m1 + mu)
    if ring.pump is not None and cfg.calibration.method == "first_principles":
        pumps = pump_buildup(ring, pumps, cfg.pump_detunings)
    return detunings(disp, assignment, ws, wp1, wp2, ring, w0, pumps)


def operating_point(cfg: RunConfig) -> CouplingSet:
    """Couplings at the reference signal mode.

    Calibrated methods fit the couplings to measured narrow-band data;
    ``first_principles`` builds them from pump powers, Kerr coefficients and
    the dispersion grid.
    """
    if cfg.calibration.method == "first_principles":
        pumps = pump_buildup(cfg.ring, cfg.pumps, cfg.pump_detunings)
        w0 = omega0(cfg.ring, pumps)
        return _dispersion_couplings(cfg, cfg.dispersion, cfg.ring, cfg.dispersion.signal.reference_mode, cfg.pumps.mu, w0)
    return calibrate(cfg.ring, cfg.calibration.targets)


def calibrated_dispersion(cfg: RunConfig, c: CouplingSet | None = None, follow_mode: int | None = None) -> DispersionModel:
    """Dispersion grid whose idler modes reproduce the calibrated mismatch.

    The difference between calibrated and grid-derived mismatch is stored
    as resonance offsets on the two idler modes adjacent to the signal (a
    stand-in for local avoided crossings). ``follow_mode`` attaches the
    offsets to another signal mode instead of the reference one.
    """
    disp = cfg.dispersion
    if cfg.calibration.method == "first_principles":
        return disp
    c = operating_point(cfg) if c is None else c
    mu = cfg.pumps.mu
    m0 = disp.signal.reference_mode
    grid = _dispersion_couplings(cfg, disp, cfg.ring, m0, mu, c.omega0)
    extra_plus = (c.idler_plus_detuning - grid.idler_plus_detuning) / (TWO_PI * cfg.ring.round_trip_time)
    extra_minus = (c.idler_minus_detuning - grid.idler_minus_detuning) / (TWO_PI * cfg.ring.round_trip_time)
    k = (follow_mode - m0) if follow_mode is not None else 0
    return replace(disp, signal=disp.signal.with_offsets({k + mu: extra_plus, k - mu: extra_minus}))


# ---------------------------------------------------------------------------
# Figure sweeps
# ---------------------------------------------------------------------------


def run_solve(cfg: RunConfig) -> Result:
    """One-shot steady state at the operating point."""
    ring = cfg.ring
    c = operating_point(cfg)
    sig = SignalInput.from_flux(cfg.signal.flux, TWO_PI * signal_frequency(cfg))
    sol = steady_state(ring, c, sig)
    oracle = ode_oracle(ring, c, sig)
    scale = max(float(np.max(np.abs(sol.fields))), 1e-300)
    summary = {
        "omega0_over_alpha": c.omega0 / ring.alpha,
        "omega1_over_alpha": c.omega1 / ring.alpha,
        "omega2_over_alpha": c.omega2 / ring.alpha,
        "alpha": ring.alpha,
        "theta": ring.theta,
        "efficiency_blue": sol.efficiency_plus,
        "efficiency_red": sol.efficiency_minus,
        "transmission": sol.transmission,
        "dissipated": sol.dissipated,
        "balance_defect": sol.balance_defect,
        "ode_relative_difference": float(np.max(np.abs(oracle.fields - sol.fields)) / scale),
        "dip_fwhm_pumps_off_hz": dip_fwhm(ring, c.with_omega0(0.0)),
        "dip_fwhm_pumps_on_hz": dip_fwhm(ring, c),
    }
    rows = [
        ("signal", 0, sol.transmission),
        ("idler+", 1, sol.efficiency_plus),
        ("idler-", -1, sol.efficiency_minus),
    ]
    return Result("solve", ("channel", "order", "fraction"), rows, summary)


def run_fig4b(cfg: RunConfig) -> Result:
    """Transmission spectra with pumps off and on."""
    ring = cfg.ring
    c = operating_point(cfg)
    span = cfg.sweep.dip_span * ring.signal.loaded_linewidth
    x = np.linspace(-span, span, 4 * cfg.sweep.points + 1)
    off = transmission_spectrum(ring, c.with_omega0(0.0), x)
    on = transmission_spectrum(ring, c, x)
    rows = [(float(f), float(a), float(b)) for f, a, b in zip(x, off.transmission, on.transmission)]
    summary = {
        "dip_fwhm_pumps_off_hz": dip_fwhm(ring, c.with_omega0(0.0)),
        "dip_fwhm_pumps_on_hz": dip_fwhm(ring, c),
        "min_transmission_pumps_off": float(off.transmission.min()),
        "min_transmission_pumps_on": float(on.transmission.min()),
    }
    return Result("fig4b", ("offset_hz", "transmission_pumps_off", "transmission_pumps_on"), rows, summary)


def _lorentzian_or_delta(center: float, fwhm: float) -> LineShape:
    return LineShape.delta(center) if fwhm <= 0 else LineShape.lorentzian(center, fwhm)


def run_fig4c(cfg: RunConfig, jobs: int = 1) -> Result:
    """Spectrally averaged efficiency against Lorentzian input FWHM."""
    ring = cfg.ring
    c = operating_point(cfg)
    fc = signal_frequency(cfg)
    widths = np.linspace(0.0, cfg.sweep.fwhm_max, cfg.sweep.points)

    def point(w):
        a = avg_conversion_efficiency(ring, c, _lorentzian_or_delta(fc, w))
        return (float(w), a.blue, a.red)

    rows = _map(point, list(widths), jobs)
    narrow = avg_conversion_efficiency(ring, c, LineShape.delta(fc))
    at_cfg = avg_conversion_efficiency(ring, c, LineShape.lorentzian(fc, cfg.signal.lorentzian_fwhm))
    at_3 = avg_conversion_efficiency(ring, c, LineShape.lorentzian(fc, 3e9))
    summary = {
        "efficiency_blue_narrow": narrow.blue,
        "efficiency_red_narrow": narrow.red,
        "input_fwhm_hz": cfg.signal.lorentzian_fwhm,
        "efficiency_blue_at_input_fwhm": at_cfg.blue,
        "efficiency_red_at_input_fwhm": at_cfg.red,
        "narrow_to_3ghz_ratio": narrow.blue / at_3.blue,
    }
    return Result("fig4c", ("fwhm_hz", "efficiency_blue", "efficiency_red"), rows, summary)


def fig4ef_spectra(cfg: RunConfig) -> tuple[Spectrum, Spectrum, Spectrum]:
    """Voigt input, blue idler and remnant spectra on a common grid.

    The idler is shown at the input frequencies; its true carrier is one
    pump separation higher.
    """
    ring = cfg.ring
    c = operating_point(cfg)
    fc = signal_frequency(cfg)
    s = cfg.signal
    shape = LineShape.voigt(fc, s.voigt_lorentzian_fwhm, gaussian_for_voigt(s.voigt_fwhm, s.voigt_lorentzian_fwhm), s.flux)
    half = max(12.0 * ring.signal.loaded_linewidth, 6.0 * shape.width)
    grid = np.linspace(fc - half, fc + half, 4096)
    inp = sample(shape, grid)
    return inp, idler_spectrum(ring, c, inp), remnant_spectrum(ring, c, inp)


def run_fig4ef(cfg: RunConfig) -> Result:
    """Input, converted-idler and remnant spectra for the Voigt preset."""
    inp, idl, rem = fig4ef_spectra(cfg)
    fit_in = ps.fit_linewidth(inp, "voigt")
    fit_idl = ps.fit_linewidth(idl, "voigt")
    fc = signal_frequency(cfg)
    rows = []
    for s in (inp, idl, rem):
        rows.extend((float(f - fc), float(d), s.channel) for f, d in zip(s.frequency, s.density))
    summary = {
        "input_fwhm_voigt_fit_hz": fit_in.fwhm,
        "idler_fwhm_voigt_fit_hz": fit_idl.fwhm,
        "idler_fwhm_voigt_fit_error_hz": fit_idl.fwhm_error,
        "idler_fwhm_half_max_hz": idl.fwhm(),
        "idler_flux_fraction": idl.integral() / inp.integral(),
        "remnant_flux_fraction": rem.integral() / inp.integral(),
        "frequency_reference_hz": fc,
    }
    header = ("offset_hz",) + SPECTRUM_HEADER[1:]
    return Result("fig4ef", header, rows, summary)


def run_fig5a(cfg: RunConfig, jobs: int = 1) -> Result:
    """Narrow-band efficiency across signal modes at fixed quality factors.

    The signal sits on resonance at each mode; the calibrated excess
    mismatch follows the signal mode, so variation comes from the grid
    dispersion and the frequency scaling of loss and coupling.
    """
    base = operating_point(cfg)
    disp = cfg.dispersion
    b = disp.signal
    lam_lo, lam_hi = cfg.sweep.wavelength_min, cfg.sweep.wavelength_max
    mu = cfg.pumps.mu
    modes = []
    for k in range(-b.window + mu, b.window - mu + 1):
        lam = C_LIGHT * TWO_PI / mode_frequency(disp, "signal", b.reference_mode + k)
        if lam_lo <= lam <= lam_hi:
            modes.append(b.reference_mode + k)
    if not modes:
        raise ConfigurationError("no signal modes inside the configured wavelength range and dispersion window")

    def point(m):
        f = mode_frequency(disp, "signal", m) / TWO_PI
        band = replace(cfg.ring.signal, frequency=f)
        ring = replace(cfg.ring, signal=band)
        d = calibrated_dispersion(cfg, base, follow_mode=m)
        c = _dispersion_couplings(cfg, d, ring, m, mu, base.omega0)
        r = response(ring, c)
        return (int(m), float(C_LIGHT / f), float(r["eta_plus"]), float(r["eta_minus"]))

    rows = _map(point, modes, jobs)
    blue = np.array([r[2] for r in rows])
    summary = {
        "modes": len(rows),
        "mean_efficiency_blue": float(blue.mean()),
        "min_efficiency_blue": float(blue.min()),
        "max_efficiency_blue": float(blue.max()),
        "wavelength_range_m": [float(rows[-1][1]), float(rows[0][1])],
    }
    return Result("fig5a", ("mode", "wavelength_m", "efficiency_blue", "efficiency_red"), rows, summary)


def run_fig5b(cfg: RunConfig, jobs: int = 1) -> Result:
    """Narrow-band efficiency against pump mode separation."""
    base = operating_point(cfg)
    disp = calibrated_dispersion(cfg, base)
    ring = cfg.ring
    m0 = disp.signal.reference_mode
    lam = C_LIGHT / disp.signal.reference_frequency

    def point(mu):
        c = _dispersion_couplings(cfg, disp, ring, m0, mu, base.omega0)
        r = response(ring, c)
        shift_hz, _ = translation_range(disp, mu)
        wp = [mode_frequency(disp, "pump", disp.pump.reference_mode + k) for k in (0, mu)]
        sep = abs(wp[1] - wp[0]) / TWO_PI
        return (int(mu), float(sep), float(lam**2 * sep / C_LIGHT), float(r["eta_plus"]), float(r["eta_minus"]))

    rows = _map(point, list(range(1, cfg.sweep.mu_max + 1)), jobs)
    top_hz, top_m = translation_range(disp, cfg.sweep.mu_max)
    blue = np.array([r[3] for r in rows])
    summary = {
        "efficiency_blue_mu1": rows[0][3],
        "efficiency_blue_max_mu": rows[-1][3],
        "efficiency_blue_range": [float(blue.min()), float(blue.max())],
        "max_shift_hz": top_hz,
        "max_shift_m": top_m,
    }
    return Result("fig5b", ("mu", "shift_hz", "shift_m", "efficiency_blue", "efficiency_red"), rows, summary)


def run_fig5c(cfg: RunConfig) -> Result:
    """Resonance wavelength shift against chip temperature change."""
    t = cfg.tuning
    dts = np.linspace(0.0, cfg.sweep.temperature_max, cfg.sweep.points)
    rows = [(float(d), float(t.rate * d)) for d in dts]
    summary = {
        "rate_m_per_k": t.rate,
        "shift_at_max_m": t.rate * cfg.sweep.temperature_max,
        "temperature_max_k": cfg.sweep.temperature_max,
    }
    return Result("fig5c", ("temperature_change_k", "wavelength_shift_m"), rows, summary)


def figs2_efficiency(cfg: RunConfig, loaded_linewidth: float, input_fwhm: float, c: CouplingSet | None = None):
    """Averaged efficiency after changing the loaded linewidth at fixed intrinsic Q.

    All couplings scale with the loss rate, which keeps the operating point
    fixed relative to the resonance.
    """
    c = operating_point(cfg) if c is None else c
    ring = cfg.ring.with_loaded_linewidth(loaded_linewidth)
    scaled = c.scaled(ring.alpha / cfg.ring.alpha)
    return avg_conversion_efficiency(ring, scaled, _lorentzian_or_delta(signal_frequency(cfg), input_fwhm))


def run_figS2(cfg: RunConfig, jobs: int = 1, inputs: Iterable[float] | None = None) -> Result:
    """Averaged efficiency against converter loaded linewidth."""
    c = operating_point(cfg)
    inputs = (1e9, cfg.signal.lorentzian_fwhm) if inputs is None else tuple(inputs)
    lws = np.linspace(cfg.sweep.loaded_min, cfg.sweep.loaded_max, cfg.sweep.points)
    q_i = cfg.ring.signal.q_intrinsic
    f = cfg.ring.signal.frequency
    if lws[0] <= f / q_i:
        raise ConfigurationError("loaded linewidth sweep must stay above the intrinsic linewidth")
    jobs_list = [(w, lw) for w in inputs for lw in lws]

    def point(item):
        w, lw = item
        a = figs2_efficiency(cfg, lw, w, c)
        return (float(lw), float(w), a.blue, a.red)

    rows = _map(point, jobs_list, jobs)
    summary = {
        "efficiency_blue_2p87ghz_at_4p5ghz": figs2_efficiency(cfg, 4.5e9, cfg.signal.lorentzian_fwhm, c).blue,
        "efficiency_blue_1ghz_at_2ghz": figs2_efficiency(cfg, 2e9, 1e9, c).blue,
    }
    return Result("figS2", ("loaded_linewidth_hz", "input_fwhm_hz", "efficiency_blue", "efficiency_red"), rows, summary)


# ---------------------------------------------------------------------------
# Budget, noise and g2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EfficiencyBudget:
    """Where the converted light goes, and what perfect extraction would give."""

    blue: float
    red: float
    higher_order: float
    extraction: float
    ceiling: float

    @property
    def total(self) -> float:
        return self.blue + self.red + self.higher_order


def efficiency_budget(
    blue: float, red: float, higher_order: float, intrinsic_linewidth: float, coupling_linewidth: float
) -> EfficiencyBudget:
    """Extraction ``kc / (kc + ki)`` and the idler total divided by it, capped at 1."""
    if min(blue, red, higher_order) < 0:
        raise ValueError("idler fractions must be >= 0")
    if not (intrinsic_linewidth >= 0 and coupling_linewidth > 0):
        raise ValueError("linewidths must be positive")
    extraction = coupling_linewidth / (coupling_linewidth + intrinsic_linewidth)
    total = blue + red + higher_order
    return EfficiencyBudget(blue, red, higher_order, extraction, min(1.0, total / extraction))


def run_budget(cfg: RunConfig, fractions: tuple[float, float, float] | None = None) -> Result:
    """Efficiency budget from measured fractions and the linewidth split."""
    if cfg.budget is None:
        raise ConfigurationError("missing [budget] section")
    b = cfg.budget
    blue, red, higher = fractions if fractions is not None else (b["blue"], b["red"], b["higher_order"])
    budget = efficiency_budget(blue, red, higher, b["intrinsic_linewidth"], b["coupling_linewidth"])
    c = operating_point(cfg)
    sig = SignalInput(1.0, TWO_PI * signal_frequency(cfg))
    ext = extended_basis_solve(cfg.ring, c, sig, 2)
    summary = {
        "blue": budget.blue,
        "red": budget.red,
        "higher_order": budget.higher_order,
        "extraction": budget.extraction,
        "extraction_from_quality_factors": cfg.ring.signal.extraction,
        "ceiling": budget.ceiling,
        "model_higher_order_two_orders": ext.higher_order,
    }
    rows = [(k, float(v)) for k, v in summary.items()]
    return Result("budget", ("quantity", "value"), rows, summary)


def run_noise(cfg: RunConfig) -> Result:
    if cfg.noise is None:
        raise ConfigurationError("missing [noise] section")
    n = cfg.noise
    nb = ps.noise_budget(n["power"], n["wavelength"], n["rep_rate"], n["time_bin"], n["signal_per_pulse"], n["efficiency"])
    summary = {
        "noise_power_w": nb.noise_power,
        "noise_flux_per_s": nb.flux,
        "noise_photons_per_pulse": nb.noise_per_pulse,
        "signal_photons_per_pulse": nb.signal_per_pulse,
        "efficiency": nb.efficiency,
        "snr": nb.snr,
    }
    return Result("noise", ("quantity", "value"), [(k, float(v)) for k, v in summary.items()], summary)


def run_g2fit(cfg: RunConfig, seed: int = 0, histogram: ps.CoincidenceHistogram | None = None) -> Result:
    """Fit a coincidence histogram (or a synthetic one drawn with ``seed``)."""
    rng = np.random.default_rng(seed)
    if histogram is None:
        if cfg.g2 is None:
            raise ConfigurationError("g2fit needs an input histogram or a [g2] section")
        g = cfg.g2
        model = ps.G2Model.constrained(g["a1"], 1.0 / g["tau1"], 1.0 / g["tau2"])
        histogram = ps.synthesize_histogram(model, g["plateau_counts"], rng, g["bins"], g["bin_width"],
                                            g["signal_fraction"])
    fit = ps.fit_g2(histogram, rng=rng)
    rows = [(float(t), float(n), float(ps.g2_binned(fit.model, [t], histogram.bin_width)[0] * fit.normalization))
            for t, n in zip(histogram.tau, histogram.counts)]
    return Result("g2fit", ("tau_s", "counts", "model_counts"), rows, fit.to_dict())


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

FORMATS = ("csv", "json", "plot-script")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(result: Result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header)
    for row in result.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    return v


def to_json(result: Result, provenance: dict, include_rows: bool = True) -> str:
    doc = {"name": result.name, "provenance": provenance, "summary": jsonable(result.summary)}
    if include_rows:
        doc["columns"] = list(result.header)
        doc["rows"] = jsonable(result.rows)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def plot_script(result: Result, csv_name: str) -> str:
    """Plain-text plotting program for the emitted CSV."""
    x, ys = result.header[0], [h for h in result.header[1:]]
    return (
        '"""Plot {name} from {csv}."""\n'
        "import csv\n"
        "import matplotlib.pyplot as plt\n\n"
        "with open({csv!r}) as fh:\n"
        "    rows = list(csv.DictReader(fh))\n\n"
        "def num(v):\n"
        "    try:\n"
        "        return float(v)\n"
        "    except ValueError:\n"
        "        return None\n\n"
        "fig, ax = plt.subplots()\n"
        "for col in {ys!r}:\n"
        "    pts = [(num(r[{x!r}]), num(r[col])) for r in rows]\n"
        "    pts = [p for p in pts if None not in p]\n"
        "    if pts:\n"
        "        ax.plot(*zip(*pts), label=col)\n"
        "ax.set_xlabel({x!r})\n"
        "ax.legend()\n"
        "fig.savefig({png!r}, dpi=150)\n"
    ).format(name=result.name, csv=csv_name, x=x, ys=ys, png=csv_name.rsplit(".", 1)[0] + ".png")


def emit(result: Result, out_dir: str | Path, fmt: str, provenance: dict) -> list[Path]:
    """Write ``result`` under ``out_dir``; returns the written paths.

    ``csv`` writes the table, a summary JSON and a plotting script; ``json``
    writes one document with table and summary; ``plot-script`` writes the
    table and script only. Contents depend only on the inputs.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []

    def put(name: str, text: str) -> None:
        p = out / name
        with open(p, "w", newline="") as fh:
            fh.write(text)
        written.append(p)

    csv_name = f"{result.name}.csv"
    if fmt in ("csv", "plot-script"):
        put(csv_name, to_csv(result))
        put(f"{result.name}_plot.py", plot_script(result, csv_name))
    if fmt == "csv":
        put(f"{result.name}_summary.json", to_json(result, provenance, include_rows=False))
    if fmt == "json":
        put(f"{result.name}.json", to_json(result, provenance))
    return written


def provenance(cfg: RunConfig, seed: int, command: str) -> dict:
    return {"command": command, "config_hash": cfg.hash(), "config_source": cfg.source, "seed": int(seed)}
