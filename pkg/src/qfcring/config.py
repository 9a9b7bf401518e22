"""
Run configuration: strict sectioned key-value files with unit suffixes.

Every key has a declared physical kind. Values are a number optionally
followed by a unit (``40 um``, ``1.12 GHz``, ``10 mW``, ``13.67 pm/K``);
a bare number is taken in SI base units. Unknown sections or keys are
errors, and physical parameters without a sensible default must be present.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from scipy.constants import c as C_LIGHT

from .cmt import BandParams, CalibrationTargets, PumpConfig, RingParams
from .dispersion import BandDispersion, DispersionModel, TuneState, mode_frequency
from .errors import ConfigParseError, ConfigurationError

_PREFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12}

UNITS: dict[str, dict[str, float]] = {
    "length": {p + "m": s for p, s in _PREFIX.items() if p not in ("k", "M", "G", "T")},
    "frequency": {p + "Hz": s for p, s in _PREFIX.items() if p in ("", "k", "M", "G", "T")},
    "power": {p + "W": s for p, s in _PREFIX.items() if p not in ("k", "M", "G", "T")},
    "time": {p + "s": s for p, s in _PREFIX.items() if p not in ("k", "M", "G", "T")},
    "rate": {u: s for p, s in _PREFIX.items() if p in ("", "n", "p") for u in (p + "m/K", p + "m/C")},
    "gamma": {"/W/m": 1.0, "1/(W m)": 1.0},
    "temperature": {"C": 1.0, "K": 1.0},
    "number": {},
    "integer": {},
    "text": {},
}

REQUIRED, OPTIONAL = True, False

# section -> key -> (kind, required, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "ring": {
        "radius": ("length", REQUIRED, None),
        "width": ("length", OPTIONAL, None),
        "fsr": ("frequency", REQUIRED, None),
        "signal_wavelength": ("length", REQUIRED, None),
        "loaded_linewidth": ("frequency", REQUIRED, None),
        "q_intrinsic": ("number", REQUIRED, None),
        "gamma_signal": ("gamma", REQUIRED, None),
        "gamma_pump": ("gamma", REQUIRED, None),
        "pump_wavelength": ("length", REQUIRED, None),
        "pump_q_intrinsic": ("number", REQUIRED, None),
        "pump_q_coupling": ("number", REQUIRED, None),
    },
    "dispersion.signal": {
        "reference_mode": ("integer", REQUIRED, None),
        "fsr": ("frequency", REQUIRED, None),
        "d2": ("frequency", REQUIRED, None),
        "d3": ("frequency", OPTIONAL, 0.0),
        "window": ("integer", OPTIONAL, 50),
    },
    "dispersion.pump": {
        "reference_mode": ("integer", REQUIRED, None),
        "fsr": ("frequency", REQUIRED, None),
        "d2": ("frequency", REQUIRED, None),
        "d3": ("frequency", OPTIONAL, 0.0),
        "window": ("integer", OPTIONAL, 50),
    },
    "tuning": {
        "rate": ("rate", REQUIRED, None),
        "reference_temperature": ("temperature", OPTIONAL, 20.0),
        "t_min": ("temperature", OPTIONAL, -math.inf),
        "t_max": ("temperature", OPTIONAL, math.inf),
    },
    "pumps": {
        "power1": ("power", REQUIRED, None),
        "power2": ("power", REQUIRED, None),
        "mu": ("integer", REQUIRED, None),
        "detuning1": ("number", OPTIONAL, 0.0),
        "detuning2": ("number", OPTIONAL, 0.0),
    },
    "signal": {
        "lorentzian_fwhm": ("frequency", REQUIRED, None),
        "voigt_fwhm": ("frequency", REQUIRED, None),
        "voigt_lorentzian_fwhm": ("frequency", REQUIRED, None),
        "flux": ("number", OPTIONAL, 1.0),
    },
    "calibration": {
        "method": ("text", OPTIONAL, "joint"),
        "eta_blue": ("number", OPTIONAL, None),
        "eta_red": ("number", OPTIONAL, None),
        "pumped_dip_fwhm": ("frequency", OPTIONAL, None),
        "branch": ("text", OPTIONAL, "high"),
    },
    "sweep": {
        "points": ("integer", OPTIONAL, 100),
        "fwhm_max": ("frequency", OPTIONAL, 6e9),
        "dip_span": ("number", OPTIONAL, 6.0),
        "loaded_min": ("frequency", OPTIONAL, 0.5e9),
        "loaded_max": ("frequency", OPTIONAL, 8e9),
        "wavelength_min": ("length", OPTIONAL, 840e-9),
        "wavelength_max": ("length", OPTIONAL, 980e-9),
        "mu_max": ("integer", OPTIONAL, 8),
        "temperature_max": ("temperature", OPTIONAL, 60.0),
    },
    "budget": {
        "blue": ("number", REQUIRED, None),
        "red": ("number", REQUIRED, None),
        "higher_order": ("number", REQUIRED, None),
        "intrinsic_linewidth": ("frequency", REQUIRED, None),
        "coupling_linewidth": ("frequency", REQUIRED, None),
    },
    "noise": {
        "power": ("power", REQUIRED, None),
        "wavelength": ("length", REQUIRED, None),
        "rep_rate": ("frequency", REQUIRED, None),
        "time_bin": ("time", REQUIRED, None),
        "signal_per_pulse": ("number", REQUIRED, None),
        "efficiency": ("number", REQUIRED, None),
    },
    "g2": {
        "a1": ("number", REQUIRED, None),
        "tau1": ("time", REQUIRED, None),
        "tau2": ("time", REQUIRED, None),
        "plateau_counts": ("number", REQUIRED, None),
        "bins": ("integer", OPTIONAL, 401),
        "bin_width": ("time", OPTIONAL, 128e-12),
        "signal_fraction": ("number", OPTIONAL, 1.0),
    },
}

REQUIRED_SECTIONS = ("ring", "dispersion.signal", "dispersion.pump", "tuning", "pumps", "signal", "calibration")
CALIBRATION_METHODS = ("joint", "efficiency", "first_principles")

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*(.*?)\s*$")


def parse_quantity(text: str, kind: str) -> float | int | str:
    """Convert ``"1.12 GHz"`` style text to an SI value of the given kind."""
    if kind == "text":
        return text.strip()
    m = _NUMBER.match(text)
    if not m:
        raise ValueError(f"cannot read a number from {text!r}")
    value, unit = m.group(1), m.group(2)
    if kind == "integer":
        if unit or not re.fullmatch(r"[-+]?\d+", value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    number = float(value)
    if not unit:
        return number
    table = UNITS[kind]
    if unit not in table:
        allowed = ", ".join(sorted(table)) or "none"
        raise ValueError(f"unit {unit!r} not valid for a {kind}; allowed: {allowed}")
    return number * table[unit]


# ---------------------------------------------------------------------------
# Typed configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalSpec:
    lorentzian_fwhm: float
    voigt_fwhm: float
    voigt_lorentzian_fwhm: float
    flux: float = 1.0


@dataclass(frozen=True)
class SweepSpec:
    points: int = 100
    fwhm_max: float = 6e9
    dip_span: float = 6.0
    loaded_min: float = 0.5e9
    loaded_max: float = 8e9
    wavelength_min: float = 840e-9
    wavelength_max: float = 980e-9
    mu_max: int = 8
    temperature_max: float = 60.0


@dataclass(frozen=True)
class CalibrationSpec:
    method: str
    targets: CalibrationTargets | None


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``values`` keeps the normalized SI values per section for hashing and
    provenance; the typed fields are what the harness consumes.
    """

    ring: RingParams
    dispersion: DispersionModel
    pumps: PumpConfig
    pump_detunings: tuple[float, float]
    signal: SignalSpec
    calibration: CalibrationSpec
    sweep: SweepSpec
    tuning: TuneState
    budget: dict | None
    noise: dict | None
    g2: dict | None
    values: dict = field(repr=False)
    source: str = "<string>"

    def hash(self) -> str:
        """SHA-256 over the normalized configuration values."""
        blob = json.dumps(self.values, sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("["):
            section = s.strip("[]").strip()
            lines[(section, "")] = n
        elif section is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = n
    return lines


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate configuration text."""
    if not text.strip():
        raise ConfigParseError("configuration is empty", 1)
    parser = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(f"expected a [section] header, got {exc.line.strip()!r}", exc.lineno) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigParseError(str(exc.message if hasattr(exc, "message") else exc), exc.lineno or 1) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 1
        raise ConfigParseError(f"cannot parse {exc.errors[0][1]!r}" if exc.errors else str(exc), lineno) from exc
    if not parser.sections():
        raise ConfigParseError("no sections found", 1)
    lines = _key_lines(text)

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigParseError(f"unknown section [{section}]", lines.get((section, ""), 1))
        schema = SCHEMA[section]
        out: dict = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key), lines.get((section, ""), 1))
            if key not in schema:
                raise ConfigParseError(f"unknown key {key!r} in [{section}]", line)
            try:
                out[key] = parse_quantity(raw, schema[key][0])
            except ValueError as exc:
                raise ConfigParseError(f"[{section}] {key}: {exc}", line) from exc
        for key, (_, required, default) in schema.items():
            if key not in out:
                if required:
                    raise ConfigurationError(f"[{section}] is missing required key {key!r}")
                out[key] = default
        values[section] = out
    for section in REQUIRED_SECTIONS:
        if section not in values:
            raise ConfigurationError(f"missing required section [{section}]")
    return _build(values, source)


def _build(v: dict, source: str) -> RunConfig:
    r = v["ring"]
    f_signal = C_LIGHT / r["signal_wavelength"]
    f_pump = C_LIGHT / r["pump_wavelength"]
    for name in ("q_intrinsic", "pump_q_intrinsic", "pump_q_coupling"):
        if not r[name] > 0:
            raise ConfigurationError(f"RingParams invariant violated: {name} must be > 0, got {r[name]}")
    if not r["fsr"] > 0:
        raise ConfigurationError(f"RingParams invariant violated: fsr must be > 0, got {r['fsr']}")
    signal_band = BandParams.from_linewidths(f_signal, r["loaded_linewidth"], r["q_intrinsic"])
    pump_band = BandParams(f_pump, r["pump_q_intrinsic"], r["pump_q_coupling"])
    ring = RingParams(r["radius"], 1.0 / r["fsr"], signal_band, r["gamma_signal"], r["gamma_pump"], pump_band)

    t = v["tuning"]
    ds, dp = v["dispersion.signal"], v["dispersion.pump"]
    disp = DispersionModel(
        BandDispersion(f_signal, ds["reference_mode"], ds["fsr"], ds["d2"], ds["d3"], ds["window"]),
        BandDispersion(f_pump, dp["reference_mode"], dp["fsr"], dp["d2"], dp["d3"], dp["window"]),
        thermal_rate=t["rate"],
    )
    tuning = TuneState(t["reference_temperature"], t["reference_temperature"], t["rate"], t["t_min"], t["t_max"])

    p = v["pumps"]
    if p["mu"] < 1:
        raise ConfigurationError("PumpConfig invariant violated: mu must be >= 1")
    m1 = disp.pump.reference_mode
    m2 = m1 + p["mu"]
    pumps = PumpConfig(
        p["power1"], p["power2"], mode_frequency(disp, "pump", m1), mode_frequency(disp, "pump", m2), m1, m2
    )

    s = v["signal"]
    if not (s["lorentzian_fwhm"] > 0 and s["voigt_fwhm"] > 0 and 0 <= s["voigt_lorentzian_fwhm"] <= s["voigt_fwhm"]):
        raise ConfigurationError("[signal] widths must be positive with the Voigt Lorentzian part <= its total")
    signal = SignalSpec(s["lorentzian_fwhm"], s["voigt_fwhm"], s["voigt_lorentzian_fwhm"], s["flux"])

    c = v["calibration"]
    if c["method"] not in CALIBRATION_METHODS:
        raise ConfigurationError(f"[calibration] method must be one of {CALIBRATION_METHODS}")
    targets = None
    if c["method"] != "first_principles":
        if c["eta_blue"] is None:
            raise ConfigurationError("[calibration] needs eta_blue unless method = first_principles")
        if c["method"] == "joint":
            if c["eta_red"] is None or c["pumped_dip_fwhm"] is None:
                raise ConfigurationError("[calibration] joint method needs eta_red and pumped_dip_fwhm")
            targets = CalibrationTargets(c["eta_blue"], c["eta_red"], c["pumped_dip_fwhm"], c["branch"])
        else:
            targets = CalibrationTargets(c["eta_blue"], branch=c["branch"])
    calibration = CalibrationSpec(c["method"], targets)

    sw = v.get("sweep") or {k: d for k, (_, _, d) in SCHEMA["sweep"].items()}
    sweep = SweepSpec(**sw)
    if sweep.points < 2 or not (0 < sweep.loaded_min < sweep.loaded_max) or not (
        0 < sweep.wavelength_min < sweep.wavelength_max
    ) or sweep.fwhm_max <= 0 or sweep.mu_max < 1 or sweep.dip_span <= 0:
        raise ConfigurationError("[sweep] ranges must be non-empty with at least two points")

    return RunConfig(
        ring, disp, pumps, (p["detuning1"], p["detuning2"]), signal, calibration, sweep, tuning,
        v.get("budget"), v.get("noise"), v.get("g2"), v, source,
    )


def load_config(path: str | Path) -> RunConfig:
    """Load a configuration file, or a bundled preset by name (``paper-device``)."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        return load_preset(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text, str(p))


def preset_names() -> list[str]:
    return sorted(f.name[:-4] for f in resources.files("qfcring.presets").iterdir() if f.name.endswith(".ini"))


def load_preset(name: str) -> RunConfig:
    res = resources.files("qfcring.presets") / f"{name}.ini"
    if not res.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config(res.read_text(), f"preset:{name}")
