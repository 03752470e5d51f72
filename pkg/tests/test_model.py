"""Closed-form layer: frozen oracle values and algebraic properties."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fransonsim.model import (
    CONVENTIONS,
    OutcomeLabel,
    PhaseSetting,
    SpectralParams,
    VisibilityParams,
    bandwidth_from_coherence_length,
    bell_violation_sigma,
    coherence_length_from_bandwidth,
    coincidence_probability,
    envelope,
    joint_outcome_distribution,
    raw_visibility_with_accidentals,
)

GENEVA_SPECTRAL = SpectralParams(1310.0, 90.0, 10.2)


# ---------------------------------------------------------------------------
# frozen oracles


def test_envelope_half_point():
    # E falls to 1/2 at 2 pi L_c sqrt(ln 2) / lambda = 40.73 um for
    # L_c = 10.2 um at 1310 nm
    assert envelope(40.7, GENEVA_SPECTRAL) == pytest.approx(0.5, abs=1e-3)
    exact = 2.0 * math.pi * 10.2 * math.sqrt(math.log(2.0)) / 1.31
    assert exact == pytest.approx(40.7307, abs=1e-3)
    assert envelope(exact, GENEVA_SPECTRAL) == pytest.approx(0.5, abs=1e-12)


def test_envelope_unity_at_zero_and_decreasing():
    assert envelope(0.0, GENEVA_SPECTRAL) == 1.0
    values = [envelope(x, GENEVA_SPECTRAL) for x in (0.0, 5.0, 10.0, 20.0, 40.0, 80.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert all(0.0 < v <= 1.0 for v in values)


def test_coincidence_probability_values():
    vis = VisibilityParams(0.816)
    p_pp = coincidence_probability(OutcomeLabel(1, 1), PhaseSetting(0.0, 0.0),
                                   GENEVA_SPECTRAL, vis)
    assert p_pp == pytest.approx(0.454, abs=1e-12)
    p_flat = coincidence_probability(OutcomeLabel(1, 1), PhaseSetting(0.0, 0.0),
                                     GENEVA_SPECTRAL, VisibilityParams(0.0))
    assert p_flat == pytest.approx(0.25, abs=1e-15)
    p_max = coincidence_probability(OutcomeLabel(1, 1), PhaseSetting(0.0, 0.0),
                                    GENEVA_SPECTRAL, VisibilityParams(1.0))
    assert p_max == pytest.approx(0.5, abs=1e-12)


def test_raw_visibility_dilution_oracle():
    v = raw_visibility_with_accidentals(0.816, 194.0, 150.0)
    assert v == pytest.approx(0.460, abs=5e-4)
    assert v == pytest.approx(0.816 * 194.0 / 344.0, abs=1e-15)


def test_bell_violation_sigma_oracle():
    assert bell_violation_sigma(0.816, 0.011) == pytest.approx(9.9, abs=0.1)
    assert bell_violation_sigma(0.816, 0.011) == pytest.approx(
        (0.816 - 1.0 / math.sqrt(2.0)) / 0.011, abs=1e-12)
    assert bell_violation_sigma(0.5, 0.01) < 0
    assert bell_violation_sigma(1.0 / math.sqrt(2.0), 0.01) == pytest.approx(0.0, abs=1e-12)


def test_coherence_length_conventions():
    assert set(CONVENTIONS) == {"gaussian-fwhm", "source-calibrated"}
    lc_g = coherence_length_from_bandwidth(1310.0, 90.0, "gaussian-fwhm")
    assert lc_g == pytest.approx(8.42, abs=0.01)
    assert lc_g == pytest.approx(2 * math.log(2) / math.pi * 1310.0**2 / 90.0 * 1e-3,
                                 abs=1e-12)
    lc_s = coherence_length_from_bandwidth(1310.0, 90.0, "source-calibrated")
    assert lc_s == pytest.approx(10.2, rel=2e-3)
    with pytest.raises(ValueError, match="convention"):
        coherence_length_from_bandwidth(1310.0, 90.0, "no-such-convention")


# ---------------------------------------------------------------------------
# validation


def test_parameter_validation():
    with pytest.raises(ValueError):
        SpectralParams(-1310.0, 90.0, 10.2)
    with pytest.raises(ValueError):
        SpectralParams(1310.0, 0.0, 10.2)
    with pytest.raises(ValueError):
        VisibilityParams(1.2)
    with pytest.raises(ValueError):
        OutcomeLabel(0, 1)
    with pytest.raises(ValueError):
        PhaseSetting(float("nan"), 0.0)
    with pytest.raises(ValueError):
        raw_visibility_with_accidentals(0.8, 0.0, 0.0)
    with pytest.raises(ValueError):
        bell_violation_sigma(0.8, 0.0)


# ---------------------------------------------------------------------------
# properties

phases_st = st.floats(-10.0, 10.0, allow_nan=False)
vis_st = st.floats(0.0, 1.0, allow_nan=False)
mismatch_st = st.floats(0.0, 200.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(d1=phases_st, d2=phases_st, v=vis_st, dd=mismatch_st)
def test_distribution_normalized_and_symmetric(d1, d2, v, dd):
    dist = joint_outcome_distribution(PhaseSetting(d1, d2, dd), GENEVA_SPECTRAL,
                                      VisibilityParams(v))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= p <= 1.0 for p in dist.values())
    # flipping both outcome signs leaves the probability unchanged
    assert dist[(1, 1)] == pytest.approx(dist[(-1, -1)], abs=1e-15)
    assert dist[(1, -1)] == pytest.approx(dist[(-1, 1)], abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(d1=phases_st, v=vis_st, dd=mismatch_st)
def test_fringe_amplitude_equals_v_times_envelope(d1, v, dd):
    # sweep d2 at fixed d1: the fringe of P(+,+) has amplitude V*E exactly
    vis = VisibilityParams(v)
    p_max = coincidence_probability(OutcomeLabel(1, 1), PhaseSetting(d1, -d1, dd),
                                    GENEVA_SPECTRAL, vis)
    p_min = coincidence_probability(OutcomeLabel(1, 1),
                                    PhaseSetting(d1, math.pi - d1, dd),
                                    GENEVA_SPECTRAL, vis)
    amp = (p_max - p_min) / (p_max + p_min)
    assert amp == pytest.approx(v * envelope(dd, GENEVA_SPECTRAL), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(x=mismatch_st)
def test_envelope_even(x):
    assert envelope(x, GENEVA_SPECTRAL) == pytest.approx(
        envelope(-x, GENEVA_SPECTRAL), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(center=st.floats(100.0, 5000.0), bw=st.floats(0.1, 500.0),
       convention=st.sampled_from(sorted(CONVENTIONS)))
def test_conversion_round_trip(center, bw, convention):
    lc = coherence_length_from_bandwidth(center, bw, convention)
    back = bandwidth_from_coherence_length(center, lc, convention)
    assert back == pytest.approx(bw, rel=1e-12)
    # doubling the bandwidth halves the coherence length
    assert coherence_length_from_bandwidth(center, 2 * bw, convention) == pytest.approx(
        lc / 2.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(v1=vis_st, v2=vis_st, sig=st.floats(1e-4, 1.0))
def test_bell_sigma_monotone_in_visibility(v1, v2, sig):
    lo, hi = sorted((v1, v2))
    assert bell_violation_sigma(lo, sig) <= bell_violation_sigma(hi, sig)


def test_from_bandwidth_and_from_coherence_length_agree():
    a = SpectralParams.from_bandwidth(1310.0, 90.0, "source-calibrated")
    b = SpectralParams.from_coherence_length(1310.0, a.coherence_length_um,
                                             "source-calibrated")
    assert b.bandwidth_fwhm_nm == pytest.approx(90.0, rel=1e-12)
    assert a.coherence_length_um == pytest.approx(10.2, rel=2e-3)


def test_phase_sum_and_mismatch_carried():
    ps = PhaseSetting(0.3, 0.4, 12.5)
    assert ps.phase_sum_rad == pytest.approx(0.7, abs=1e-15)
    assert ps.path_mismatch_um == 12.5
