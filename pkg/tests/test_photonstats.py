import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfcring.errors import FitError, MixingError, NormalizationError, ResolutionError
from qfcring.photonstats import (
    CoincidenceHistogram,
    G2Model,
    antibunching_threshold,
    fit_coherence,
    fit_g2,
    fit_linewidth,
    g2_binned,
    g2_eval,
    mix_with_noise,
    noise_budget,
    photon_energy,
    pulsed_g2,
    read_histogram,
    signal_fraction,
    synthesize_histogram,
    write_histogram,
)
from qfcring.spectral import LineShape, gaussian_for_voigt, sample

QD_MODEL = G2Model.constrained(-0.9, 1 / 0.6e-9, 1 / 5e-9)


# --- model -----------------------------------------------------------------------


def test_single_exponential_limit():
    m = G2Model(-1.0, 0.0, 1e9, 1e8)
    assert g2_eval(m, 0.0) == 0.0
    assert g2_eval(m, 1e-6) == pytest.approx(1.0)


def test_constraint_enforced():
    with pytest.raises(ValueError, match="a1 \\+ a2"):
        G2Model(-0.5, -0.3, 1e9, 1e8)
    with pytest.raises(ValueError):
        G2Model(-1.0, 0.0, -1e9, 1e8)


def test_bin_average_matches_quadrature():
    w = 128e-12
    t = np.linspace(-w / 2, w / 2, 20001)
    direct = np.trapezoid(g2_eval(QD_MODEL, t), t) / w
    assert g2_binned(QD_MODEL, [0.0], w)[0] == pytest.approx(direct, rel=1e-8)


@given(st.floats(-2.0, 1.0), st.floats(1e7, 1e10), st.floats(1e7, 1e10), st.floats(0, 1e-7))
def test_model_symmetric_in_delay(a1, g1, g2, t):
    m = G2Model.constrained(a1, g1, g2)
    assert g2_eval(m, t) == pytest.approx(g2_eval(m, -t), abs=1e-15)


# --- fitting ----------------------------------------------------------------------


def test_pre_conversion_value():
    rho = 0.9828
    h = synthesize_histogram(QD_MODEL, 110000, np.random.default_rng(3), 401, 128e-12, rho)
    fit = fit_g2(h, np.random.default_rng(3))
    assert fit.g2_zero_error == pytest.approx(0.003, abs=0.0005)
    assert fit.g2_zero_datum == pytest.approx(0.080, abs=2 * fit.g2_zero_error)
    # constrained model still forces zero at zero delay; the datum is reported separately
    assert fit.model.a1 + fit.model.a2 == pytest.approx(-1.0, abs=1e-12)


def test_synthetic_round_trip():
    h = synthesize_histogram(QD_MODEL, 20000, np.random.default_rng(11), 401)
    fit = fit_g2(h, np.random.default_rng(11))
    u = fit.uncertainties
    assert fit.model.gamma1 == pytest.approx(QD_MODEL.gamma1, abs=3 * u["gamma1"])
    assert fit.model.gamma2 == pytest.approx(QD_MODEL.gamma2, abs=3 * u["gamma2"])
    assert fit.model.a1 == pytest.approx(QD_MODEL.a1, abs=3 * u["a1"])
    truth = g2_binned(QD_MODEL, [0.0], h.bin_width)[0]
    assert abs(fit.g2_zero_datum - truth) < 2 * fit.g2_zero_error
    assert fit.warnings == ()


def test_fit_is_seed_deterministic():
    h = synthesize_histogram(QD_MODEL, 5000, np.random.default_rng(1), 401)
    a = fit_g2(h, np.random.default_rng(5)).to_json()
    b = fit_g2(h, np.random.default_rng(5)).to_json()
    assert a == b
    d = json.loads(a)
    assert {"model", "params", "uncertainties", "g2_zero_datum"} <= d.keys()


def test_flat_histogram_reports_poissonian():
    tau = (np.arange(201) - 100) * 128e-12
    h = CoincidenceHistogram(tau, np.full(201, 1000.0))
    with pytest.warns(RuntimeWarning, match="Poissonian"):
        fit = fit_g2(h)
    assert fit.g2_zero_datum == pytest.approx(1.0)
    assert "Poissonian" in fit.warnings[0]


def test_small_histogram_rejected():
    h = CoincidenceHistogram(np.arange(20) * 1e-10, np.ones(20))
    with pytest.raises(ResolutionError):
        fit_g2(h)


def test_empty_plateau_rejected():
    tau = (np.arange(101) - 50) * 128e-12
    counts = np.zeros(101)
    counts[40:60] = 5
    with pytest.raises(NormalizationError):
        fit_g2(CoincidenceHistogram(tau, counts))


def test_histogram_validation():
    with pytest.raises(ValueError, match="uniform"):
        CoincidenceHistogram(np.array([0.0, 1.0, 3.0]), np.ones(3))
    with pytest.raises(ValueError):
        CoincidenceHistogram(np.array([0.0, 1.0]), np.array([1.0, -1.0]))


def test_histogram_csv_round_trip(tmp_path):
    h = synthesize_histogram(QD_MODEL, 100, np.random.default_rng(0), 101)
    write_histogram(tmp_path / "h.csv", h)
    back = read_histogram(tmp_path / "h.csv")
    assert np.array_equal(back.tau, h.tau) and np.array_equal(back.counts, h.counts)
    (tmp_path / "bad.csv").write_text("t,n\n0,1\n")
    with pytest.raises(ValueError, match="tau_s,counts"):
        read_histogram(tmp_path / "bad.csv")


def test_pulsed_peak_ratio():
    period = 12.5e-9
    tau = np.arange(-4000, 4001) * 10e-12
    peaks = sum(np.exp(-((tau - k * period) / 0.3e-9) ** 2) * (0.1 if k == 0 else 1.0) for k in range(-3, 4))
    h = CoincidenceHistogram(tau, 1000 * peaks)
    ratio, err = pulsed_g2(h, period, 2e-9, side_peaks=3)
    assert ratio == pytest.approx(0.1, rel=1e-6)
    assert err > 0


@pytest.mark.filterwarnings("ignore:plateau beyond")
def test_g2_zero_coverage():
    # 200 Poisson realizations; the datum should sit within 2 sigma in >= 95 % of them
    rng = np.random.default_rng(0)
    truth = g2_binned(QD_MODEL, [0.0], 128e-12)[0]
    hits = 0
    for _ in range(200):
        h = synthesize_histogram(QD_MODEL, 2000, rng, 401)
        fit = fit_g2(h, rng, restarts=2)
        hits += abs(fit.g2_zero_datum - truth) <= 2 * fit.g2_zero_error
    assert hits / 200 >= 0.95


# --- mixing ------------------------------------------------------------------------


def test_inverse_mixing_reference_values():
    rho = signal_fraction(0.080, 0.290)
    assert rho == pytest.approx(0.878, abs=0.005)
    assert mix_with_noise(0.080, rho) == pytest.approx(0.290, abs=1e-12)


def test_antibunching_threshold():
    assert antibunching_threshold(0.08) == pytest.approx(0.737, abs=5e-4)
    assert mix_with_noise(0.08, 0.74) < 0.5 < mix_with_noise(0.08, 0.73)


def test_infeasible_mix():
    with pytest.raises(MixingError):
        signal_fraction(0.08, 0.05)
    with pytest.raises(MixingError):
        signal_fraction(0.08, 1.2)
    with pytest.raises(ValueError):
        mix_with_noise(0.08, 1.5)


@given(st.floats(0, 3), st.floats(0, 1), st.floats(0, 1))
def test_mixing_bounds_and_monotone(g, r1, r2):
    lo, hi = min(g, 1.0), max(g, 1.0)
    m1, m2 = mix_with_noise(g, r1), mix_with_noise(g, r2)
    assert lo - 1e-12 <= m1 <= hi + 1e-12
    if r1 <= r2:
        # moving towards the source value as the signal share grows
        assert abs(m1 - g) >= abs(m2 - g) - 1e-12


@given(st.floats(0, 0.99), st.floats(0.01, 1))
def test_mixing_inverse_round_trip(g, rho):
    assert signal_fraction(g, mix_with_noise(g, rho)) == pytest.approx(rho, rel=1e-9, abs=1e-9)


# --- noise budget ---------------------------------------------------------------------


def test_noise_budget_values():
    b = noise_budget(3.2e-15, 916.17e-9, 80e6, 2e-9, 0.01, 0.10)
    assert b.flux == pytest.approx(1.5e4, rel=0.05)
    assert b.noise_per_pulse == pytest.approx(3e-5, rel=0.05)
    assert b.snr > 30
    assert b.snr == pytest.approx(33.9, abs=0.1)


def test_noise_budget_invariants():
    b = noise_budget(3.2e-15, 916.17e-9, 80e6, 2e-9, 0.01, 0.10)
    assert b.power_from_flux() == pytest.approx(3.2e-15, rel=1e-9)
    assert b.noise_per_pulse == pytest.approx(b.flux * b.time_bin, rel=1e-12)
    assert b.snr == pytest.approx(b.signal_per_pulse * b.efficiency / b.noise_per_pulse, rel=1e-12)


def test_noise_budget_rejects_nonpositive():
    with pytest.raises(ValueError):
        noise_budget(0.0, 916e-9, 80e6, 2e-9, 0.01, 0.1)
    with pytest.raises(ValueError):
        photon_energy(-1.0)


# --- linewidth and coherence -------------------------------------------------------------


def _lorentz_samples(fwhm, f0=0.0, n=801, span=10):
    f = np.linspace(f0 - span * fwhm, f0 + span * fwhm, n)
    return f, LineShape.lorentzian(f0, fwhm).density(f)


def test_exact_lorentzian_fit():
    f, y = _lorentz_samples(1.62e9)
    fit = fit_linewidth((f, y), "lorentzian")
    assert fit.fwhm == pytest.approx(1.62e9, rel=1e-6)


def test_noisy_lorentzian_within_two_sigma():
    f, y = _lorentz_samples(1.62e9, n=401)
    sigma = 0.02 * y.max()
    noisy = y + np.random.default_rng(0).normal(0, sigma, y.size)
    fit = fit_linewidth((f, noisy), "lorentzian", sigma=sigma)
    assert abs(fit.fwhm - 1.62e9) < 2 * fit.fwhm_error


def test_voigt_preset_round_trip():
    fl = 1.5e9
    shape = LineShape.voigt(0.0, fl, gaussian_for_voigt(2.75e9, fl))
    s = sample(shape, np.linspace(-30e9, 30e9, 1201))
    fit = fit_linewidth(s, "voigt")
    assert fit.fwhm == pytest.approx(2.75e9, rel=1e-3)
    assert fit.params["lorentzian_fwhm"] == pytest.approx(fl, rel=1e-2)


def test_under_resolved_peak():
    f = np.linspace(-10e9, 10e9, 11)
    y = LineShape.lorentzian(0.0, 1e8).density(f)
    with pytest.raises(ResolutionError):
        fit_linewidth((f, y))


def test_unknown_line_model():
    f, y = _lorentz_samples(1e9)
    with pytest.raises(ValueError):
        fit_linewidth((f, y), "sinc")


def test_linewidth_coverage():
    f, y = _lorentz_samples(1.62e9, n=201)
    sigma = 0.03 * y.max()
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(200):
        fit = fit_linewidth((f, y + rng.normal(0, sigma, y.size)), "lorentzian", sigma=sigma)
        hits += abs(fit.fwhm - 1.62e9) <= 2 * fit.fwhm_error
    assert hits / 200 >= 0.95


def test_coherence_time_to_fwhm():
    t = np.linspace(0, 500e-12, 26)
    fit = fit_coherence(t, np.exp(-t / 102e-12))
    assert fit.tau_c == pytest.approx(102e-12, rel=1e-6)
    assert fit.fwhm == pytest.approx(3.12e9, rel=1e-3)


def test_coherence_doubling_halves_fwhm():
    t = np.linspace(0, 1e-9, 26)
    a = fit_coherence(t, np.exp(-t / 100e-12)).fwhm
    b = fit_coherence(t, np.exp(-t / 200e-12)).fwhm
    assert b / a == pytest.approx(0.5, rel=1e-6)


def test_coherence_non_decaying():
    t = np.linspace(0, 1e-10, 10)
    with pytest.raises(FitError):
        fit_coherence(t, np.ones_like(t))
    with pytest.raises(ResolutionError):
        fit_coherence(t[:3], np.ones(3))


def test_coherence_matches_exponential_decay_linewidth():
    # a single-sided exponential coherence has a Lorentzian spectrum of the same FWHM
    tau_c = 102e-12
    f, y = _lorentz_samples(1 / (math.pi * tau_c))
    t = np.linspace(0, 400e-12, 21)
    assert fit_coherence(t, np.exp(-t / tau_c)).fwhm == pytest.approx(fit_linewidth((f, y)).fwhm, rel=1e-5)
