"""Closed-form statistics of a two-interferometer energy-time Bell test.

A photon pair crosses two unbalanced interferometers, one per photon.
When both photons take the short arms or both take the long arms the two
amplitudes are indistinguishable and interfere; post-selected on that
subensemble, the joint outcome probability for detectors i, j in
{+1, -1} is

    P(i, j) = 1/4 * (1 + i*j * V * E(dd) * cos(d1 + d2))

with d1, d2 the interferometer phases, V the lumped apparatus
visibility, and E the Gaussian coherence envelope in the arm-length
mismatch dd between the two interferometers:

    E(dd) = exp(-(lambda * dd / (2 pi L_c))**2)

L_c is the single-photon coherence length.  Everything in this module
is deterministic arithmetic on these expressions; the Monte Carlo in
:mod:`fransonsim.montecarlo` is tested against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constants import BELL_VISIBILITY_THRESHOLD

__all__ = [
    "SpectralParams",
    "PhaseSetting",
    "OutcomeLabel",
    "VisibilityParams",
    "CONVENTIONS",
    "envelope",
    "coincidence_probability",
    "joint_outcome_distribution",
    "raw_visibility_with_accidentals",
    "bell_violation_sigma",
    "coherence_length_from_bandwidth",
    "bandwidth_from_coherence_length",
    "BELL_VISIBILITY_THRESHOLD",
]

# L_c = k * lambda**2 / bandwidth for each supported conversion convention.
# "gaussian-fwhm" is the textbook value for a Gaussian spectrum quoted in
# FWHM.  "source-calibrated" pins the constant that reconciles a 90 nm
# bandwidth with the 10.2 um coherence length measured for the bundled
# source; it is a calibration, not a derivation.
CONVENTIONS = {
    "gaussian-fwhm": 2.0 * math.log(2.0) / math.pi,
    "source-calibrated": 0.535,
}


def _require_finite_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class SpectralParams:
    """Spectral description of the down-converted photons.

    center_wavelength_nm: degenerate signal/idler wavelength.
    bandwidth_fwhm_nm: FWHM of the single-photon spectrum.
    coherence_length_um: single-photon coherence length; must agree with
        the bandwidth under the convention the scenario declares (checked
        at scenario validation, not here, because the convention lives in
        the scenario's calibration block).
    """

    center_wavelength_nm: float
    bandwidth_fwhm_nm: float
    coherence_length_um: float

    def __post_init__(self):
        _require_finite_positive("center_wavelength_nm", self.center_wavelength_nm)
        _require_finite_positive("bandwidth_fwhm_nm", self.bandwidth_fwhm_nm)
        _require_finite_positive("coherence_length_um", self.coherence_length_um)

    @classmethod
    def from_bandwidth(cls, center_wavelength_nm, bandwidth_fwhm_nm,
                       convention="gaussian-fwhm"):
        lc = coherence_length_from_bandwidth(
            center_wavelength_nm, bandwidth_fwhm_nm, convention)
        return cls(center_wavelength_nm, bandwidth_fwhm_nm, lc)

    @classmethod
    def from_coherence_length(cls, center_wavelength_nm, coherence_length_um,
                              convention="gaussian-fwhm"):
        bw = bandwidth_from_coherence_length(
            center_wavelength_nm, coherence_length_um, convention)
        return cls(center_wavelength_nm, bw, coherence_length_um)


@dataclass(frozen=True)
class PhaseSetting:
    """One analyzer setting: the two phases plus the arm-length mismatch
    (in length units) that feeds the coherence envelope."""

    delta1_rad: float
    delta2_rad: float
    path_mismatch_um: float = 0.0

    def __post_init__(self):
        for name in ("delta1_rad", "delta2_rad", "path_mismatch_um"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be finite, got {v!r}")

    @property
    def phase_sum_rad(self) -> float:
        return self.delta1_rad + self.delta2_rad


@dataclass(frozen=True)
class OutcomeLabel:
    """Joint detector outcome: i at station 1, j at station 2, each +1 or -1."""

    i: int
    j: int

    def __post_init__(self):
        if self.i not in (-1, 1) or self.j not in (-1, 1):
            raise ValueError(f"outcome labels must be +1 or -1, got ({self.i}, {self.j})")


@dataclass(frozen=True)
class VisibilityParams:
    """Lumped apparatus visibility of the interfering subensemble."""

    apparatus_visibility: float = 1.0

    def __post_init__(self):
        v = self.apparatus_visibility
        if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ValueError(f"apparatus_visibility must lie in [0, 1], got {v!r}")


def envelope(path_mismatch_um: float, spectral: SpectralParams) -> float:
    """Coherence envelope E(dd) for an arm-length mismatch in micrometres.

    Even in the mismatch and equal to 1 at zero; falls to 1/2 at
    dd = 2 pi L_c sqrt(ln 2) / lambda.
    """
    if not math.isfinite(path_mismatch_um):
        raise ValueError(f"path_mismatch_um must be finite, got {path_mismatch_um!r}")
    lam_um = spectral.center_wavelength_nm * 1e-3
    arg = lam_um * path_mismatch_um / (2.0 * math.pi * spectral.coherence_length_um)
    return math.exp(-(arg * arg))


def coincidence_probability(outcome: OutcomeLabel, phases: PhaseSetting,
                            spectral: SpectralParams,
                            visibility: VisibilityParams) -> float:
    """Post-selected joint outcome probability for one detector pair."""
    veff = visibility.apparatus_visibility * envelope(phases.path_mismatch_um, spectral)
    return 0.25 * (1.0 + outcome.i * outcome.j * veff * math.cos(phases.phase_sum_rad))


def joint_outcome_distribution(phases: PhaseSetting, spectral: SpectralParams,
                               visibility: VisibilityParams) -> dict:
    """All four post-selected outcome probabilities, keyed by (i, j)."""
    return {
        (i, j): coincidence_probability(OutcomeLabel(i, j), phases, spectral, visibility)
        for i in (1, -1)
        for j in (1, -1)
    }


def raw_visibility_with_accidentals(net_visibility: float,
                                    mean_true_coincidences: float,
                                    mean_accidentals: float) -> float:
    """Visibility dilution by a flat accidental background.

    A fringe of net visibility V riding on S true coincidences plus A
    phase-independent accidentals per interval fits to a raw visibility
    V * S / (S + A).
    """
    if mean_true_coincidences < 0 or mean_accidentals < 0:
        raise ValueError("mean counts must be non-negative")
    total = mean_true_coincidences + mean_accidentals
    if total == 0:
        raise ValueError("raw visibility is undefined for zero total counts")
    return net_visibility * mean_true_coincidences / total


def bell_violation_sigma(net_visibility: float, visibility_sigma: float) -> float:
    """How many standard deviations the visibility sits above 1/sqrt(2).

    Negative when the visibility is below the local-realistic bound.
    """
    if not (math.isfinite(visibility_sigma) and visibility_sigma > 0):
        raise ValueError(f"visibility_sigma must be positive, got {visibility_sigma!r}")
    return (net_visibility - BELL_VISIBILITY_THRESHOLD) / visibility_sigma


def _convention_factor(convention: str) -> float:
    try:
        return CONVENTIONS[convention]
    except KeyError:
        known = ", ".join(sorted(CONVENTIONS))
        raise ValueError(f"unknown conversion convention {convention!r} (known: {known})") from None


def coherence_length_from_bandwidth(center_wavelength_nm: float,
                                    bandwidth_fwhm_nm: float,
                                    convention: str = "gaussian-fwhm") -> float:
    """Coherence length in micrometres from a spectral FWHM in nanometres."""
    _require_finite_positive("center_wavelength_nm", center_wavelength_nm)
    _require_finite_positive("bandwidth_fwhm_nm", bandwidth_fwhm_nm)
    k = _convention_factor(convention)
    return k * center_wavelength_nm**2 / bandwidth_fwhm_nm * 1e-3


def bandwidth_from_coherence_length(center_wavelength_nm: float,
                                    coherence_length_um: float,
                                    convention: str = "gaussian-fwhm") -> float:
    """Inverse of :func:`coherence_length_from_bandwidth`."""
    _require_finite_positive("center_wavelength_nm", center_wavelength_nm)
    _require_finite_positive("coherence_length_um", coherence_length_um)
    k = _convention_factor(convention)
    return k * center_wavelength_nm**2 / (coherence_length_um * 1e3)
