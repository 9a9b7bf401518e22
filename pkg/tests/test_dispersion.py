import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import c as C_LIGHT

from qfcring.cmt import PumpConfig, pump_buildup
from qfcring.dispersion import (
    BandDispersion,
    DispersionModel,
    ModeAssignment,
    TuneState,
    approximate_mismatch,
    assign_modes,
    detunings,
    mode_frequency,
    thermal_tune,
    translation_range,
)
from qfcring.errors import AssignmentError, ConfigurationError, ModeRangeError, ThermalRangeError

from conftest import FSR, PUMP_HZ, SIGNAL_HZ

TWO_PI = 2 * math.pi


def model(d2=0.0, d3=0.0, window=50):
    return DispersionModel(
        BandDispersion(SIGNAL_HZ, 570, FSR, d2, d3, window),
        BandDispersion(PUMP_HZ, 337, FSR, d2, d3, window),
    )


def on_grid(disp, k_s=0, k_p=0, mu=1):
    ws = mode_frequency(disp, "signal", 570 + k_s)
    wp1 = mode_frequency(disp, "pump", 337 + k_p)
    wp2 = mode_frequency(disp, "pump", 337 + k_p + mu)
    return ws, wp1, wp2


def test_reference_mode_is_center():
    assert mode_frequency(model(3e6), "signal", 570) == TWO_PI * SIGNAL_HZ


def test_linear_grid_spacing():
    d = model()
    w = [mode_frequency(d, "signal", m) for m in range(560, 581)]
    assert np.allclose(np.diff(w), TWO_PI * FSR, rtol=1e-9)


def test_fsr_in_wavelength():
    lam = 917.78e-9
    assert lam**2 * FSR / C_LIGHT == pytest.approx(1.61e-9, abs=0.005e-9)


def test_out_of_window_mode():
    with pytest.raises(ModeRangeError):
        mode_frequency(model(window=10), "signal", 581)


def test_invalid_band_parameters():
    with pytest.raises(ConfigurationError, match="FSR"):
        BandDispersion(SIGNAL_HZ, 570, -1.0)
    with pytest.raises(ConfigurationError, match="ordering"):
        BandDispersion(SIGNAL_HZ, 570, FSR, d2=-2 * FSR / 50)


def test_assignment_on_grid():
    d = model()
    a = assign_modes(d, *on_grid(d))
    assert (a.signal, a.idler_plus, a.idler_minus, a.mu) == (570, 571, 569, 1)


def test_assignment_eight_fsr():
    d = model()
    a = assign_modes(d, *on_grid(d, mu=8))
    assert a.mu == 8
    shift_hz, _ = translation_range(d, a.mu)
    assert shift_hz == pytest.approx(8 * FSR)


def test_mid_gap_signal_rejected():
    d = model()
    ws, wp1, wp2 = on_grid(d)
    with pytest.raises(AssignmentError) as exc:
        assign_modes(d, ws + 0.5 * TWO_PI * FSR, wp1, wp2)
    assert abs(exc.value.residual_hz) == pytest.approx(FSR / 2, rel=1e-6)


def test_assignment_invariant_enforced():
    with pytest.raises(ConfigurationError):
        ModeAssignment(570, 337, 338, 572, 569)


@given(st.integers(-50, 50))
def test_grid_roundtrip(k):
    d = model(4e6, 1e3)
    m = 570 + k
    w = mode_frequency(d, "signal", m)
    a = assign_modes(d, w, *on_grid(d)[1:])
    assert a.signal == m


@given(st.integers(-40, 40), st.integers(1, 8))
def test_matching_rule(k, mu):
    d = model(2e6)
    a = assign_modes(d, *on_grid(d, k_s=k, mu=mu))
    assert a.idler_plus + a.idler_minus == 2 * a.signal
    assert a.idler_plus - a.idler_minus == 2 * mu


def test_perfect_matching_zero_detunings(ring):
    d = model()
    ws, wp1, wp2 = on_grid(d)
    c = detunings(d, assign_modes(d, ws, wp1, wp2), ws, wp1, wp2, ring)
    assert abs(c.signal_detuning) <= 1e-12
    assert abs(c.omega1) <= 1e-12 and abs(c.omega2) <= 1e-12


def test_omega2_from_d2(ring):
    d2 = 5e6
    d = model(d2)
    ws, wp1, wp2 = on_grid(d)
    c = detunings(d, assign_modes(d, ws, wp1, wp2), ws, wp1, wp2, ring)
    assert c.omega2 == pytest.approx(0.5 * TWO_PI * d2 * ring.round_trip_time, abs=1e-12)


@given(st.integers(-30, 30), st.integers(1, 8), st.floats(-2e7, 2e7))
def test_definitions_match_closed_form(ring, k, mu, d2):
    d = model(d2)
    ws, wp1, wp2 = on_grid(d, k_s=k, mu=mu)
    c = detunings(d, assign_modes(d, ws, wp1, wp2), ws, wp1, wp2, ring)
    w1, w2 = approximate_mismatch(d, ring, 570 + k, mu, abs(wp2 - wp1))
    assert c.omega1 == pytest.approx(w1, abs=1e-12)
    assert c.omega2 == pytest.approx(w2, abs=1e-12)


@pytest.mark.parametrize("mu", range(1, 9))
def test_cubic_residual_bounded(ring, mu):
    d3 = 2e5
    d = model(3e6, d3)
    ws, wp1, wp2 = on_grid(d, mu=mu)
    c = detunings(d, assign_modes(d, ws, wp1, wp2), ws, wp1, wp2, ring)
    _, w2 = approximate_mismatch(d, ring, 570, mu, abs(wp2 - wp1))
    assert abs(c.omega2 - w2) <= abs(TWO_PI * d3 * mu**3 * ring.round_trip_time / 6) + 1e-12


def test_pump_imbalance_folded_into_detunings(ring):
    d = model()
    ws, wp1, wp2 = on_grid(d)
    p = pump_buildup(ring, PumpConfig(12e-3, 8e-3, wp1, wp2, 337, 338))
    c = detunings(d, assign_modes(d, ws, wp1, wp2), ws, wp1, wp2, ring, pumps=p)
    expected = -0.5 * ring.gamma_pump * ring.circumference * (abs(p.field1) ** 2 - abs(p.field2) ** 2)
    assert c.omega1 == pytest.approx(expected, rel=1e-9)


def test_mode_offsets_shift_resonances():
    b = BandDispersion(SIGNAL_HZ, 570, FSR).with_offsets({1: 1e8})
    d = DispersionModel(b, b)
    assert mode_frequency(d, "signal", 571) - mode_frequency(model(), "signal", 571) == pytest.approx(TWO_PI * 1e8, rel=1e-6)


# --- thermal tuning and translation -------------------------------------------


def test_zero_temperature_change():
    assert TuneState(20.0).shift == 0.0


def test_sixty_kelvin_shift():
    assert TuneState(80.0).shift == pytest.approx(820.2e-12, rel=1e-12)


def test_inverse_tuning():
    r = thermal_tune(TuneState(20.0), 917.78e-9, 917.78e-9 + 136.7e-12)
    assert r.temperature - 20.0 == pytest.approx(10.0, rel=1e-9)
    assert r.residual == 0.0
    assert "separation" in r.note


def test_tuning_out_of_range():
    t = TuneState(20.0, t_min=10.0, t_max=50.0)
    with pytest.raises(ThermalRangeError) as exc:
        thermal_tune(t, 917.78e-9, 917.78e-9 + 820e-12)
    assert exc.value.clamped_temperature == 50.0
    assert exc.value.residual_m == pytest.approx(820e-12 - 30 * 13.67e-12, rel=1e-9)


@given(st.floats(-500e-12, 500e-12))
def test_thermal_linear_invertible(dl):
    t = TuneState(20.0)
    r = thermal_tune(t, 917.78e-9, 917.78e-9 + dl)
    back = TuneState(r.temperature).shift
    assert back == pytest.approx(dl, abs=1e-21)


@pytest.mark.parametrize(
    "mu,hz,nm",
    [(1, 573.2e9, 1.61), (8, 4.5856e12, 12.88)],
)
def test_translation_range(mu, hz, nm):
    shift_hz, shift_m = translation_range(model(), mu)
    assert shift_hz == pytest.approx(hz, rel=1e-9)
    assert shift_m * 1e9 == pytest.approx(nm, abs=0.01)


def test_translation_beyond_eight_thz():
    shift_hz, shift_m = translation_range(model(), 14)
    assert shift_hz > 8e12
    assert shift_m == pytest.approx(22.5e-9, abs=0.15e-9)
