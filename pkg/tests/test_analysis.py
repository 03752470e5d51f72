"""Fringe fits, spectra, background subtraction, envelope, verdicts."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from fransonsim.analysis import (
    FringeFit,
    accidental_level,
    accidental_rate_estimate,
    bell_report,
    bootstrap_visibility_sigma,
    fit_envelope,
    fit_fringe,
    fit_fringe_xy,
    fourier_significant_frequencies,
    fourier_significant_frequencies_xy,
    subtract_accidentals,
    subtract_accidentals_xy,
    three_peak_areas,
)
from fransonsim.constants import BELL_VISIBILITY_THRESHOLD
from fransonsim.errors import FitError, InsufficientDataError
from fransonsim.model import PhaseSetting, bell_violation_sigma


def uniform_phases(n, base=0.1):
    return base + np.arange(n) * (2.0 * math.pi / n)


def fringe_counts(phases, mean, visibility, offset=0.0):
    return mean * (1.0 + visibility * np.cos(phases + offset))


# ---------------------------------------------------------------------------
# fringe fitting


def test_fit_recovers_noiseless_fringe_exactly():
    phases = uniform_phases(12)
    counts = fringe_counts(phases, 1000.0, 0.5, 0.3)
    fit = fit_fringe_xy(phases, counts)
    assert fit.mean_level == pytest.approx(1000.0, abs=1e-6)
    assert fit.visibility == pytest.approx(0.5, abs=1e-8)
    assert fit.phase_offset_rad == pytest.approx(0.3, abs=1e-8)
    assert fit.chi_square_per_dof < 1e-12
    assert fit.n_points == 12
    assert not fit.suspect


def test_fit_poisson_coverage():
    # the quoted sigma must describe the actual estimator scatter
    phases = uniform_phases(25)
    expected = fringe_counts(phases, 300.0, 0.8)
    rng = np.random.default_rng(2026)
    trials = 500
    in_one, in_three = 0, 0
    for _ in range(trials):
        fit = fit_fringe_xy(phases, rng.poisson(expected))
        err = abs(fit.visibility - 0.8)
        in_one += err <= fit.visibility_sigma
        in_three += err <= 3 * fit.visibility_sigma
    assert in_three >= trials - 8
    assert 0.61 <= in_one / trials <= 0.75


def test_fit_flags_bad_model():
    phases = uniform_phases(12)
    counts = fringe_counts(phases, 1000.0, 0.5)
    counts[4] = 5000.0  # one wild outlier blows up chi^2
    fit = fit_fringe_xy(phases, counts)
    assert fit.chi_square_per_dof > 3.0
    assert fit.suspect


def test_fit_input_validation():
    phases = uniform_phases(12)
    counts = fringe_counts(phases, 100.0, 0.5)
    with pytest.raises(InsufficientDataError):
        fit_fringe_xy(phases[:4], counts[:4])
    with pytest.raises(InsufficientDataError):
        fit_fringe_xy(phases[:6] * 0.1, counts[:6])  # span below pi
    with pytest.raises(ValueError):
        fit_fringe_xy(phases, counts[:-1])
    with pytest.raises(ValueError):
        fit_fringe_xy(phases, counts, count_sigmas=np.zeros(12))


# ---------------------------------------------------------------------------
# spectrum


def test_fourier_finds_single_fringe():
    phases = uniform_phases(24)
    counts = fringe_counts(phases, 500.0, 0.4)
    lines = fourier_significant_frequencies_xy(phases, counts)
    assert len(lines) == 1
    order, magnitude = lines[0]
    assert order == pytest.approx(1.0, abs=1e-9)
    assert magnitude == pytest.approx(500.0 * 0.4, rel=1e-9)


def test_fourier_flat_data_is_empty():
    phases = uniform_phases(24)
    assert fourier_significant_frequencies_xy(phases, np.full(24, 400.0)) == []


def test_fourier_resolves_two_lines():
    phases = uniform_phases(64)
    counts = (500.0 + 200.0 * np.cos(phases) + 180.0 * np.cos(5.0 * phases))
    lines = fourier_significant_frequencies_xy(phases, counts, n_sigma=4.0)
    assert [round(order) for order, _ in lines] == [1, 5]
    assert lines[0][1] == pytest.approx(200.0, rel=1e-9)
    assert lines[1][1] == pytest.approx(180.0, rel=1e-9)


def test_fourier_input_validation():
    phases = uniform_phases(24)
    counts = fringe_counts(phases, 100.0, 0.3)
    with pytest.raises(InsufficientDataError):
        fourier_significant_frequencies_xy(phases[:5], counts[:5])
    ragged = phases.copy()
    ragged[3] += 0.05
    with pytest.raises(ValueError):
        fourier_significant_frequencies_xy(ragged, counts)
    with pytest.raises(ValueError):
        fourier_significant_frequencies_xy(phases[::-1], counts)


# ---------------------------------------------------------------------------
# accidentals


def test_accidental_level_oracle():
    mean, sigma = accidental_level([100, 110, 90])
    assert mean == pytest.approx(100.0)
    assert sigma == pytest.approx(math.sqrt(300.0) / 3.0)
    with pytest.raises(ValueError):
        accidental_level([])
    with pytest.raises(ValueError):
        accidental_level([10, -1])


def test_accidental_rate_oracle():
    # 164 kHz x 167 kHz x 400 ps = 10.955 accidental coincidences per second
    rate = accidental_rate_estimate(164_000.0, 167_000.0, 400.0)
    assert rate == pytest.approx(10.9552, abs=1e-4)
    with pytest.raises(ValueError):
        accidental_rate_estimate(1.0, 1.0, 0.0)


def test_subtraction_with_zero_background_is_identity():
    phases = uniform_phases(12)
    counts = fringe_counts(phases, 300.0, 0.6)
    net, fit = subtract_accidentals_xy(phases, counts, 0.0)
    assert np.array_equal(net, counts)
    raw = fit_fringe_xy(phases, counts)
    assert fit.visibility == pytest.approx(raw.visibility, abs=1e-12)
    assert fit.visibility_sigma == pytest.approx(raw.visibility_sigma, abs=1e-12)


def test_subtraction_lifts_visibility_exactly():
    # signal 200 (1 + 0.9 cos) over flat background 100 reads as
    # raw V = 0.9 * 200 / 300 = 0.6; subtraction must restore 0.9
    phases = uniform_phases(16)
    counts = fringe_counts(phases, 200.0, 0.9) + 100.0
    raw = fit_fringe_xy(phases, counts)
    assert raw.visibility == pytest.approx(0.6, abs=1e-8)
    net, fit = subtract_accidentals_xy(phases, counts, 100.0)
    assert fit.mean_level == pytest.approx(200.0, abs=1e-6)
    assert fit.visibility == pytest.approx(0.9, abs=1e-8)
    assert np.allclose(net, counts - 100.0)


def test_subtraction_sigma_adds_background_term():
    phases = uniform_phases(16)
    counts = fringe_counts(phases, 200.0, 0.9) + 100.0
    base = subtract_accidentals_xy(phases, counts, 100.0, accidentals_sigma=1e-12).fit
    wide = subtract_accidentals_xy(phases, counts, 100.0, accidentals_sigma=5.0).fit
    expected = math.hypot(base.visibility_sigma,
                          wide.visibility * 5.0 / wide.mean_level)
    assert wide.visibility_sigma == pytest.approx(expected, rel=1e-9)


def test_subtraction_rejects_overwhelming_background():
    phases = uniform_phases(12)
    counts = fringe_counts(phases, 40.0, 0.3)
    with pytest.raises(InsufficientDataError):
        subtract_accidentals_xy(phases, counts, 100.0)
    with pytest.raises(ValueError):
        subtract_accidentals_xy(phases, counts, -1.0)


# ---------------------------------------------------------------------------
# envelope


def test_envelope_recovers_coherence_length():
    dd = np.arange(0.0, 55.0, 5.0)
    lam_um, lc = 1.31, 10.2
    v = 0.816 * np.exp(-((lam_um * dd) / (2.0 * math.pi * lc)) ** 2)
    fit = fit_envelope(dd, v, np.full(dd.shape, 0.01), 1310.0)
    assert fit.peak_visibility == pytest.approx(0.816, abs=1e-6)
    assert fit.coherence_length_um == pytest.approx(10.2, abs=1e-4)
    assert fit.chi_square_per_dof < 1e-12
    # fitted envelope falls to half its peak where the model says it must
    assert fit.half_visibility_mismatch_um == pytest.approx(40.7307, abs=1e-3)


def test_envelope_validation():
    dd = np.array([0.0, 10.0, 10.0, 20.0, 30.0])  # only 4 distinct settings
    v = np.full(5, 0.5)
    sig = np.full(5, 0.01)
    with pytest.raises(InsufficientDataError):
        fit_envelope(dd, v, sig, 1310.0)
    good_dd = np.array([0.0, 10.0, 20.0, 30.0, 40.0])
    with pytest.raises(ValueError):
        fit_envelope(good_dd, v, np.zeros(5), 1310.0)
    with pytest.raises(ValueError):
        fit_envelope(good_dd, v[:-1], sig[:-1], 1310.0)


# ---------------------------------------------------------------------------
# verdicts


def _fit(v, sigma, mean=300.0):
    return FringeFit(mean_level=mean, visibility=v, visibility_sigma=sigma,
                     phase_offset_rad=0.0, chi_square_per_dof=1.0,
                     n_points=25, suspect=False)


def test_bell_report_assembly():
    report = bell_report(_fit(0.46, 0.016), _fit(0.816, 0.031), 117.3)
    assert report.threshold == pytest.approx(1.0 / math.sqrt(2.0))
    assert report.raw_visibility == 0.46
    assert report.net_visibility == 0.816
    assert report.accidentals_per_interval == 117.3
    assert report.sigma_violation == bell_violation_sigma(0.816, 0.031)
    assert report.sigma_violation == pytest.approx(3.5127, abs=1e-3)
    keys = set(report.as_dict())
    assert keys == {"raw_visibility", "raw_visibility_sigma", "net_visibility",
                    "net_visibility_sigma", "accidentals_per_interval",
                    "threshold", "sigma_violation"}


def test_threshold_constant():
    assert BELL_VISIBILITY_THRESHOLD == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_bootstrap_agrees_with_covariance_sigma():
    phases = uniform_phases(25)
    rng = np.random.default_rng(7)
    counts = rng.poisson(fringe_counts(phases, 300.0, 0.5))
    fit = fit_fringe_xy(phases, counts)
    boot = bootstrap_visibility_sigma(phases, counts, n_boot=150, seed=4)
    assert abs(boot - fit.visibility_sigma) < 0.35 * fit.visibility_sigma


# ---------------------------------------------------------------------------
# peak areas


def test_three_peak_areas_counts():
    diffs = np.array([-1190, -1000, -810, -150, 0, 60, 200, 810, 1000])
    left, center, right = three_peak_areas(diffs, 1000.0, 400.0)
    assert (left, center, right) == (3, 4, 2)
    with pytest.raises(ValueError):
        three_peak_areas(diffs, 1000.0, 1100.0)  # windows would overlap
    with pytest.raises(ValueError):
        three_peak_areas(diffs, -5.0, 100.0)


# ---------------------------------------------------------------------------
# record-level wrappers


def test_record_wrappers_match_xy():
    phases = uniform_phases(12)
    counts = np.rint(fringe_counts(phases, 300.0, 0.5)).astype(int)
    records = [SimpleNamespace(phase=PhaseSetting(0.0, p), windowed_coincidences=c)
               for p, c in zip(phases, counts)]
    assert fit_fringe(records) == fit_fringe_xy(phases, counts.astype(float))
    assert (fourier_significant_frequencies(records)
            == fourier_significant_frequencies_xy(phases, counts.astype(float)))
    a = subtract_accidentals(records, 10.0)
    b = subtract_accidentals_xy(phases, counts.astype(float), 10.0)
    assert a.fit == b.fit
    assert np.array_equal(a.net_counts, b.net_counts)
