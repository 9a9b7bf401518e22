import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from qfcring.cmt import (
    integrate_linear,
    BandParams,
    CalibrationTargets,
    CouplingSet,
    PumpConfig,
    RingParams,
    SignalInput,
    calibrate,
    coupled_matrix,
    dip_fwhm,
    extended_basis_solve,
    mismatch_terms,
    ode_oracle,
    ode_oracle_batch,
    omega0,
    optimal_omega0,
    pump_buildup,
    relaxation,
    response,
    steady_state,
    transmission_spectrum,
)
from qfcring.dispersion import BandDispersion, DispersionModel
from qfcring.errors import ConfigurationError, IllConditionedError

from conftest import FSR, PUMP_HZ, SIGNAL_HZ, make_ring

SIG = SignalInput(1e-12, 2 * math.pi * SIGNAL_HZ)


def pumps(p1=10e-3, p2=10e-3, mu=1, sep=None):
    w1 = 2 * math.pi * PUMP_HZ
    sep = 2 * math.pi * FSR * mu if sep is None else sep
    return PumpConfig(p1, p2, w1, w1 + sep, 337, 337 + mu)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b))


# --- frozen reference values -------------------------------------------------


def test_ring_constants_frozen(ring):
    assert ring.alpha == pytest.approx(0.006138492274983545, rel=1e-12)
    assert ring.theta == pytest.approx(0.010039109587115971, rel=1e-12)
    assert ring.signal.extraction == pytest.approx(0.8177178643710912, rel=1e-12)


def test_calibrated_couplings_frozen(ring, couplings):
    a = ring.alpha
    assert couplings.omega0 / a == pytest.approx(0.7760321203175111, rel=1e-6)
    assert couplings.omega1 / a == pytest.approx(-0.08862272347313851, rel=1e-5)
    assert couplings.omega2 / a == pytest.approx(0.8969404199860713, rel=1e-6)


# --- RingParams ----------------------------------------------------------------


def test_quality_factor_identity(ring):
    b = ring.signal
    assert 1 / b.q_loaded == pytest.approx(1 / b.q_intrinsic + 1 / b.q_coupling, rel=1e-12)
    assert 0 < ring.theta <= 2 * ring.alpha
    assert ring.circumference == pytest.approx(2 * math.pi * 40e-6, rel=1e-15)


def test_alpha_definition(ring):
    omega = 2 * math.pi * SIGNAL_HZ
    assert ring.alpha == pytest.approx(omega * ring.round_trip_time / (2 * ring.signal.q_loaded), rel=1e-14)
    assert ring.theta == pytest.approx(omega * ring.round_trip_time / ring.signal.q_coupling, rel=1e-14)


def test_loaded_linewidth_roundtrip(ring):
    assert ring.signal.loaded_linewidth == pytest.approx(1.12e9, rel=1e-12)
    assert ring.signal.intrinsic_linewidth == pytest.approx(SIGNAL_HZ / 1.6e6, rel=1e-12)


@pytest.mark.parametrize("radius,t_r", [(-1e-6, 1e-12), (40e-6, 0.0)])
def test_ring_rejects_nonpositive(radius, t_r):
    with pytest.raises(ConfigurationError, match="RingParams"):
        RingParams(radius, t_r, BandParams(SIGNAL_HZ, 1e6, 1e6), 1.0, 1.0)


def test_band_rejects_negative_q():
    with pytest.raises(ConfigurationError):
        BandParams(SIGNAL_HZ, -1.0, 1e6)


# --- pumps ----------------------------------------------------------------------


def test_zero_pump_power_gives_zero_field(ring):
    p = pump_buildup(ring, pumps(0.0, 0.0))
    assert p.field1 == 0 and p.field2 == 0
    assert omega0(ring, p) == 0.0


def test_critical_pump_buildup_matches_single_mode_ode(ring):
    p = pump_buildup(ring, pumps())
    a, th = ring.alpha_pump, ring.theta_pump
    assert abs(p.field1) ** 2 == pytest.approx(th * 10e-3 / a**2, rel=1e-12)
    # independent time integration of one driven cavity mode (in round trips)
    drive = 1j * math.sqrt(th * 10e-3)

    def f(t, y):
        e = y[0] + 1j * y[1]
        d = -a * e + drive
        return [d.real, d.imag]

    sol = solve_ivp(f, (0, 40 / a), [0.0, 0.0], rtol=1e-11, atol=1e-14)
    e_end = sol.y[0, -1] + 1j * sol.y[1, -1]
    assert abs(e_end) ** 2 == pytest.approx(abs(p.field1) ** 2, rel=1e-8)


def test_pump_field_linear_in_power(ring):
    e1 = abs(pump_buildup(ring, pumps(5e-3, 5e-3)).field1) ** 2
    e2 = abs(pump_buildup(ring, pumps(10e-3, 10e-3)).field1) ** 2
    assert e2 == pytest.approx(2 * e1, rel=1e-14)


def test_missing_pump_band_named():
    r = RingParams(40e-6, 1 / FSR, BandParams(SIGNAL_HZ, 1.6e6, 1e6), 1.0, 1.0)
    with pytest.raises(ConfigurationError, match="pump"):
        pump_buildup(r, pumps())


def test_omega0_direct_substitution():
    r = RingParams(40e-6, 1 / FSR, BandParams(SIGNAL_HZ, 1.6e6, 1e6), 1.0, 1.0)
    p = PumpConfig(1.0, 1.0, 1.0, 2.0, 1, 2, field1=1.0 + 0j, field2=1j)
    assert omega0(r, p) == pytest.approx(2 * 2 * math.pi * 40e-6, rel=1e-14)
    assert omega0(r, p) == pytest.approx(5.03e-4, rel=1e-3)


def test_omega0_requires_fields(ring):
    with pytest.raises(ConfigurationError):
        omega0(ring, pumps())


# --- mismatch terms ---------------------------------------------------------------


def _disp(d2=5e6):
    band = BandDispersion(SIGNAL_HZ, 570, FSR, d2)
    return DispersionModel(band, BandDispersion(PUMP_HZ, 337, FSR, d2))


def test_equal_pumps_one_fsr_apart_zero_omega1(ring):
    w1, w2 = mismatch_terms(_disp(), ring, pump_buildup(ring, pumps()))
    # absolute pump frequencies near 1.2e15 rad/s carry ~0.25 rad/s rounding
    assert w1 == pytest.approx(0.0, abs=1e-12)
    assert w2 == pytest.approx(0.5 * 2 * math.pi * 5e6 * ring.round_trip_time, rel=1e-14)


def test_omega2_quadratic_in_mu(ring):
    _, w2_1 = mismatch_terms(_disp(), ring, pumps(mu=1))
    _, w2_8 = mismatch_terms(_disp(), ring, pumps(mu=8))
    assert w2_8 / w2_1 == pytest.approx(64.0, rel=1e-14)


def test_pump_imbalance_enters_omega1(ring):
    p = pump_buildup(ring, pumps(12e-3, 8e-3))
    w1, _ = mismatch_terms(_disp(), ring, p)
    expected = -0.5 * ring.gamma_pump * ring.circumference * (abs(p.field1) ** 2 - abs(p.field2) ** 2)
    assert w1 == pytest.approx(expected, rel=1e-9)


# --- steady state -------------------------------------------------------------------


def test_critical_coupling_full_dip():
    ring = make_ring(loaded_linewidth=2 * SIGNAL_HZ / 1.6e6)
    s = steady_state(ring, CouplingSet(0.0), SIG)
    assert ring.theta == pytest.approx(ring.alpha, rel=1e-12)
    assert s.transmission == pytest.approx(0.0, abs=1e-24)
    assert s.idler_plus == 0 and s.idler_minus == 0


def test_matched_optimum_closed_form(ring):
    w0 = optimal_omega0(ring)
    s = steady_state(ring, CouplingSet(w0), SIG)
    peak = ring.theta**2 / (8 * ring.alpha**2)
    assert s.efficiency_plus == pytest.approx(peak, rel=1e-12)
    assert s.efficiency_minus == pytest.approx(peak, rel=1e-12)
    assert peak == pytest.approx(0.3343, abs=1e-3)
    o = ode_oracle(ring, CouplingSet(w0), SIG)
    assert rel(o.fields, s.fields) <= 1e-9


def test_closed_form_matched_efficiency(ring):
    for r in (0.1, 0.5, 1.0, 2.0):
        w0 = r * ring.alpha
        eta = ring.theta**2 * w0**2 / (ring.alpha**2 + 2 * w0**2) ** 2
        assert steady_state(ring, CouplingSet(w0), SIG).efficiency_plus == pytest.approx(eta, rel=1e-12)


def test_calibrated_point_reproduces_targets(ring, couplings):
    s = steady_state(ring, couplings, SIG)
    assert s.efficiency_plus == pytest.approx(0.31, abs=1e-9)
    assert s.efficiency_minus == pytest.approx(0.26, abs=1e-9)
    assert dip_fwhm(ring, couplings) == pytest.approx(2.0e9, rel=1e-5)


def test_single_target_calibration_branches(ring):
    hi = calibrate(ring, CalibrationTargets(0.31))
    lo = calibrate(ring, CalibrationTargets(0.31, branch="low"))
    assert lo.omega0 < optimal_omega0(ring) < hi.omega0
    for c in (hi, lo):
        assert steady_state(ring, c, SIG).efficiency_plus == pytest.approx(0.31, rel=1e-12)


def test_calibration_rejects_unreachable_target(ring):
    with pytest.raises(ConfigurationError, match="exceeds"):
        calibrate(ring, CalibrationTargets(0.5))


def test_ill_conditioning_reported(ring):
    with pytest.raises(IllConditionedError):
        # idlers on resonance with negligible loss, signal far detuned
        steady_state(ring, CouplingSet(0.0, 0.0, -0.1, 0.1), SIG, alphas=(1e-15, 1e-15, 1e-15))


def test_outputs_scale_with_power(ring, couplings):
    a = steady_state(ring, couplings, SignalInput(1e-3, SIG.frequency))
    b = steady_state(ring, couplings, SignalInput(2e-3, SIG.frequency))
    assert b.power_out_plus == pytest.approx(2 * a.power_out_plus, rel=1e-13)
    assert b.efficiency_plus == pytest.approx(a.efficiency_plus, rel=1e-13)


def test_zero_signal_power(ring, couplings):
    s = steady_state(ring, couplings, SignalInput(0.0, SIG.frequency))
    assert s.power_out_plus == 0.0 and s.efficiency_plus == pytest.approx(0.31, abs=1e-9)
    o = ode_oracle(ring, couplings, SignalInput(0.0, SIG.frequency))
    assert np.all(o.fields == 0)


def test_signal_flux_conversion():
    s = SignalInput.from_flux(1e6, SIG.frequency)
    assert s.flux == pytest.approx(1e6, rel=1e-14)
    with pytest.raises(ConfigurationError):
        SignalInput(-1.0, SIG.frequency)


# --- oracle -------------------------------------------------------------------------


def test_unpumped_relaxation_matches_integration(ring):
    c = CouplingSet(0.0, signal_detuning=0.7 * ring.alpha)
    t = 3 * ring.round_trip_time / ring.alpha
    analytic = relaxation(ring, c, SIG, t)
    m = coupled_matrix(ring, c)
    drive = np.array([1j * math.sqrt(ring.theta * SIG.power), 0, 0])
    # the transient needs a finer step than the steady-state oracle
    fields, _ = integrate_linear(m, drive, t / ring.round_trip_time, step=0.01 / ring.alpha)
    assert fields[0] == pytest.approx(analytic, rel=1e-10)


def test_oracle_equivalence_thousand_draws(ring):
    rng = np.random.default_rng(20240601)
    a = ring.alpha
    draws = [
        CouplingSet(
            float(10 ** rng.uniform(-6, -2)),
            float(rng.uniform(-10, 10) * a),
            float(rng.uniform(-10, 10) * a),
            float(rng.uniform(-10, 10) * a),
        )
        for _ in range(1000)
    ]
    oracle = ode_oracle_batch(ring, draws, SIG)
    worst = max(rel(o.fields, steady_state(ring, c, SIG).fields) for o, c in zip(oracle, draws))
    assert worst <= 1e-9


# --- extended basis -----------------------------------------------------------------


def test_extended_k1_reduces_to_three_modes(ring, couplings):
    e = extended_basis_solve(ring, couplings, SIG, 1)
    s = steady_state(ring, couplings, SIG)
    assert e.efficiency(1) == pytest.approx(s.efficiency_plus, rel=1e-12)
    assert e.efficiency(-1) == pytest.approx(s.efficiency_minus, rel=1e-12)
    assert e.transmission == pytest.approx(s.transmission, rel=1e-12)
    assert rel(e.fields[[1, 2, 0]], s.fields) <= 1e-12


def test_extended_basis_converges(ring):
    c = CouplingSet(0.8 * ring.alpha, 0.0, 0.6 * ring.alpha)
    k3 = extended_basis_solve(ring, c, SIG, 3)
    k6 = extended_basis_solve(ring, c, SIG, 6)
    for n in (-1, 1):
        assert abs(k6.efficiency(n) - k3.efficiency(n)) / k3.efficiency(n) < 1e-3


def test_extended_basis_balance(ring, couplings):
    e = extended_basis_solve(ring, couplings, SIG, 3)
    assert e.total_idler + e.transmission + e.dissipated == pytest.approx(1.0, abs=1e-12)
    assert e.higher_order >= 0


@pytest.mark.parametrize("k", [0, 17, 2.5])
def test_extended_basis_rejects_bad_orders(ring, couplings, k):
    with pytest.raises(ValueError):
        extended_basis_solve(ring, couplings, SIG, k)


# --- transmission -------------------------------------------------------------------


def test_unpumped_dip_is_loaded_linewidth(ring):
    assert dip_fwhm(ring, CouplingSet(0.0)) == pytest.approx(1.12e9, rel=1e-6)


def test_unpumped_dip_symmetric(ring):
    x = np.linspace(-40e9, 40e9, 4001)
    t = transmission_spectrum(ring, CouplingSet(0.0), x)
    assert np.argmin(t.transmission) == 2000
    assert np.allclose(t.transmission, t.transmission[::-1], rtol=1e-12)
    assert t.fwhm_hz == pytest.approx(1.12e9, rel=2e-3)


def test_transmission_grid_checks(ring):
    with pytest.raises(ValueError):
        transmission_spectrum(ring, CouplingSet(0.0), [])
    with pytest.raises(ValueError):
        transmission_spectrum(ring, CouplingSet(0.0), np.linspace(-1e9, 1e9, 11))


# --- properties ---------------------------------------------------------------------

alpha0 = make_ring().alpha
couplings_st = st.builds(
    CouplingSet,
    st.floats(1e-6, 1e-2),
    st.floats(-10 * alpha0, 10 * alpha0),
    st.floats(-10 * alpha0, 10 * alpha0),
    st.floats(-10 * alpha0, 10 * alpha0),
)


@given(couplings_st)
def test_passivity_and_balance(c):
    ring = make_ring()
    s = steady_state(ring, c, SIG)
    used = s.efficiency_plus + s.efficiency_minus + s.transmission
    assert used <= 1.0 + 1e-12
    assert abs((1.0 - used) - s.dissipated) <= 1e-9
    assert 0 <= s.transmission <= 1 + 1e-12


@given(couplings_st)
def test_omega1_sign_swaps_idlers(c):
    ring = make_ring()
    a = steady_state(ring, c, SIG)
    b = steady_state(ring, CouplingSet(c.omega0, -c.omega1, c.omega2, c.signal_detuning), SIG)
    assert b.efficiency_plus == pytest.approx(a.efficiency_minus, rel=1e-13, abs=1e-300)
    assert b.efficiency_minus == pytest.approx(a.efficiency_plus, rel=1e-13, abs=1e-300)
    assert b.transmission == pytest.approx(a.transmission, rel=1e-13)


@given(st.floats(-20, 20))
def test_zero_pump_lorentzian(d):
    ring = make_ring()
    delta = d * ring.alpha
    s = steady_state(ring, CouplingSet(0.0, signal_detuning=delta), SIG)
    expected = abs(1 - ring.theta / (ring.alpha + 1j * delta)) ** 2
    assert s.transmission == pytest.approx(expected, rel=1e-12, abs=1e-15)
    assert s.efficiency_plus == 0 and s.efficiency_minus == 0


@given(couplings_st, st.floats(1e-15, 1.0))
def test_efficiencies_independent_of_power(c, p):
    ring = make_ring()
    a = steady_state(ring, c, SignalInput(p, SIG.frequency))
    b = steady_state(ring, c, SignalInput(1.0, SIG.frequency))
    assert a.efficiency_plus == pytest.approx(b.efficiency_plus, rel=1e-12, abs=1e-300)
    assert a.transmission == pytest.approx(b.transmission, rel=1e-12)


def test_monotone_saturation(ring):
    w = np.linspace(0, 3, 601) * ring.alpha
    eta = np.array([steady_state(ring, CouplingSet(x), SIG).efficiency_plus for x in w])
    peak = int(np.argmax(eta))
    assert w[peak] / ring.alpha == pytest.approx(1 / math.sqrt(2), abs=3 * (w[1] - w[0]) / ring.alpha)
    assert np.all(np.diff(eta[: peak + 1]) > 0)
    assert np.all(np.diff(eta[peak:]) < 0)


@settings(max_examples=30)
@given(couplings_st)
def test_oracle_equivalence_property(c):
    ring = make_ring()
    assert rel(ode_oracle(ring, c, SIG).fields, steady_state(ring, c, SIG).fields) <= 1e-9


def test_coupling_set_definitions():
    c = CouplingSet.from_detunings(1e-3, 0.2, 0.5, -0.1)
    assert c.omega1 == pytest.approx(0.3, abs=1e-15)
    assert c.omega2 == pytest.approx(-0.0, abs=1e-15)
    assert c.idler_plus_detuning == pytest.approx(0.5, abs=1e-15)
    assert c.idler_minus_detuning == pytest.approx(-0.1, abs=1e-15)
    with pytest.raises(ConfigurationError):
        CouplingSet(-1.0)


def test_response_vectorized_matches_pointwise(ring, couplings):
    d = np.linspace(-3, 3, 7) * ring.alpha
    r = response(ring, couplings, d)
    for k, x in enumerate(d):
        s = steady_state(ring, couplings.shifted(x), SIG)
        assert r["eta_plus"][k] == pytest.approx(s.efficiency_plus, rel=1e-12)
