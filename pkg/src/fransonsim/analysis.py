"""Fringe fitting, background subtraction and violation statistics.

The coincidence fringe is C(phi) = M (1 + V cos(phi + phi0)) sitting on
a flat accidental background.  Fits are weighted least squares with
Poisson errors (floored at 1 count).  Subtracting the measured
background shifts the mean level down without touching the amplitude,
which is what lifts the raw visibility to the net one.  A net
visibility above 1/sqrt(2) by k standard deviations is a k-sigma
violation of the local-realist bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import curve_fit

from .constants import BELL_VISIBILITY_THRESHOLD
from .errors import FitError, InsufficientDataError
from .model import bell_violation_sigma
from .rngstreams import stream

__all__ = [
    "FringeFit",
    "EnvelopeFit",
    "BellReport",
    "SubtractionResult",
    "fit_fringe",
    "fit_fringe_xy",
    "fourier_significant_frequencies",
    "fourier_significant_frequencies_xy",
    "subtract_accidentals",
    "subtract_accidentals_xy",
    "accidental_level",
    "accidental_rate_estimate",
    "fit_envelope",
    "bell_report",
    "bootstrap_visibility_sigma",
    "three_peak_areas",
]


@dataclass(frozen=True)
class FringeFit:
    """Weighted fit of C(phi) = mean_level (1 + visibility cos(phi + phase_offset))."""

    mean_level: float
    visibility: float
    visibility_sigma: float
    phase_offset_rad: float
    chi_square_per_dof: float
    n_points: int
    suspect: bool


@dataclass(frozen=True)
class EnvelopeFit:
    """Fit of V(dd) = peak_visibility exp(-(lambda dd / (2 pi L_c))^2)."""

    peak_visibility: float
    peak_visibility_sigma: float
    coherence_length_um: float
    coherence_length_sigma_um: float
    chi_square_per_dof: float

    @property
    def half_visibility_mismatch_um(self) -> float:
        """Mismatch at which the fitted envelope crosses half its peak."""
        return self.coherence_length_um * 2.0 * math.pi * math.sqrt(math.log(2.0)) \
            / self._wavelength_um

    # set by fit_envelope; stashed outside the dataclass fields so the
    # report stays a plain record of fitted quantities
    _wavelength_um: float = 1.31


@dataclass(frozen=True)
class BellReport:
    """Raw and background-corrected visibility with the violation verdict."""

    raw_visibility: float
    raw_visibility_sigma: float
    net_visibility: float
    net_visibility_sigma: float
    accidentals_per_interval: float
    threshold: float
    sigma_violation: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SubtractionResult:
    """Accidental-corrected counts (not clamped at zero) and their fit."""

    net_counts: np.ndarray
    fit: FringeFit

    def __iter__(self):  # allow: net, fit = subtract_accidentals(...)
        return iter((self.net_counts, self.fit))


def _fringe(phi, m, v, phi0):
    return m * (1.0 + v * np.cos(phi + phi0))


def _records_xy(records):
    phases = np.array([r.phase.phase_sum_rad for r in records], dtype=float)
    counts = np.array([r.windowed_coincidences for r in records], dtype=float)
    return phases, counts


def fit_fringe_xy(phases_rad, counts, count_sigmas=None) -> FringeFit:
    """Weighted least-squares fringe fit on bare arrays.

    Needs at least 5 points spanning more than half a fringe period.
    Default errors are Poisson with a floor of one count.  Initial
    guesses come from the first discrete Fourier component.
    """
    phi = np.asarray(phases_rad, dtype=float)
    c = np.asarray(counts, dtype=float)
    if phi.shape != c.shape or phi.ndim != 1:
        raise ValueError("phases_rad and counts must be 1-d arrays of equal length")
    if phi.shape[0] < 5:
        raise InsufficientDataError(
            f"fringe fit needs at least 5 points, got {phi.shape[0]}",
            diagnostics={"n_points": int(phi.shape[0])})
    span = float(phi.max() - phi.min())
    if span <= math.pi:
        raise InsufficientDataError(
            f"phase span {span:.3f} rad cannot constrain a fringe (need more than pi)",
            diagnostics={"span_rad": span})
    if count_sigmas is None:
        sig = np.sqrt(np.clip(c, 1.0, None))
    else:
        sig = np.asarray(count_sigmas, dtype=float)
        if sig.shape != c.shape or np.any(sig <= 0):
            raise ValueError("count_sigmas must be positive and match counts")

    m0 = float(c.mean())
    if m0 <= 0:
        raise InsufficientDataError("mean count is not positive; nothing to fit",
                                    diagnostics={"mean": m0})
    z = 2.0 * np.mean((c - m0) * np.exp(-1j * phi))
    v0 = min(abs(z) / m0, 1.5)
    p0 = (m0, max(v0, 1e-3), float(np.angle(z)))
    bounds = ([1e-12, 0.0, -2.0 * math.pi], [np.inf, 2.0, 2.0 * math.pi])
    try:
        popt, pcov = curve_fit(_fringe, phi, c, p0=p0, sigma=sig,
                               absolute_sigma=True, bounds=bounds, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"fringe fit did not converge: {exc}",
                       diagnostics={"p0": p0, "n_points": int(phi.shape[0]),
                                    "span_rad": span}) from None
    m, v, off = (float(x) for x in popt)
    var_v = float(pcov[1, 1])
    if not np.isfinite(var_v) or var_v <= 0:
        raise FitError("fringe fit produced a singular covariance",
                       diagnostics={"popt": [m, v, off]})
    sigma_v = math.sqrt(var_v)
    resid = (c - _fringe(phi, *popt)) / sig
    dof = max(phi.shape[0] - 3, 1)
    chi2_dof = float(np.sum(resid ** 2) / dof)
    suspect = (chi2_dof > 3.0 or v - 1.0 > 3.0 * sigma_v or v >= 1.999
               or not np.isfinite(chi2_dof))
    return FringeFit(mean_level=m, visibility=v, visibility_sigma=sigma_v,
                     phase_offset_rad=off, chi_square_per_dof=chi2_dof,
                     n_points=int(phi.shape[0]), suspect=bool(suspect))


def fit_fringe(records) -> FringeFit:
    """Fringe fit of the windowed coincidences in a scan's CountRecords."""
    phases, counts = _records_xy(list(records))
    return fit_fringe_xy(phases, counts)


def fourier_significant_frequencies_xy(phases_rad, counts, n_sigma: float = 5.0):
    """Spectral lines that rise n_sigma above the other bins.

    Requires uniformly spaced phases.  Returns a list of
    (cycles_per_two_pi, magnitude), largest magnitude first; order 1 is
    a plain fringe.  The zero-frequency term is excluded.  Flat data
    returns [].
    """
    phi = np.asarray(phases_rad, dtype=float)
    c = np.asarray(counts, dtype=float)
    if phi.shape != c.shape or phi.ndim != 1:
        raise ValueError("phases_rad and counts must be 1-d arrays of equal length")
    if phi.shape[0] < 6:
        raise InsufficientDataError("need at least 6 points for the spectrum test",
                                    diagnostics={"n_points": int(phi.shape[0])})
    steps = np.diff(phi)
    if np.any(steps <= 0):
        raise ValueError("phases must be strictly increasing")
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
        raise ValueError("spectrum requires uniformly spaced phases; resample first")
    n = phi.shape[0]
    mags = np.abs(np.fft.rfft(c - c.mean()))[1:] * 2.0 / n
    orders = np.arange(1, mags.shape[0] + 1) * 2.0 * math.pi / (n * float(steps[0]))
    out = []
    for k in range(mags.shape[0]):
        others = np.delete(mags, k)
        level = others.mean() + n_sigma * others.std(ddof=1)
        if mags[k] > level and mags[k] > 0:
            out.append((float(orders[k]), float(mags[k])))
    out.sort(key=lambda t: -t[1])
    return out


def fourier_significant_frequencies(records, n_sigma: float = 5.0):
    """Significant spectral lines of a scan's windowed coincidences."""
    phases, counts = _records_xy(list(records))
    return fourier_significant_frequencies_xy(phases, counts, n_sigma)


def accidental_level(offwindow_counts):
    """Mean accidental count per point and its Poisson uncertainty."""
    a = np.asarray(offwindow_counts, dtype=float)
    if a.ndim != 1 or a.shape[0] == 0:
        raise ValueError("offwindow_counts must be a non-empty 1-d array")
    if np.any(a < 0):
        raise ValueError("counts cannot be negative")
    total = float(a.sum())
    return total / a.shape[0], math.sqrt(max(total, 1.0)) / a.shape[0]


def accidental_rate_estimate(singles1_hz: float, singles2_hz: float,
                             window_ps: float) -> float:
    """Textbook flat-background rate R1 R2 tau, in coincidences per second.

    The converter's dead time only ever reduces the realized rate, so
    this is an upper bound for the simulation."""
    if singles1_hz < 0 or singles2_hz < 0 or window_ps <= 0:
        raise ValueError("rates must be non-negative and window_ps positive")
    return singles1_hz * singles2_hz * (window_ps / 1e12)


def subtract_accidentals_xy(phases_rad, counts, accidentals_per_interval: float,
                            accidentals_sigma: float | None = None) -> SubtractionResult:
    """Subtract a flat measured background and refit.

    Net counts keep their raw Poisson errors (subtracting a constant
    does not reduce scatter) and are deliberately not clamped at zero,
    which would bias the visibility upward.  The background estimate's
    own Poisson error enters the net visibility uncertainty through the
    mean level.
    """
    if accidentals_per_interval < 0:
        raise ValueError("accidentals_per_interval must be non-negative, "
                         f"got {accidentals_per_interval!r}")
    if accidentals_sigma is None:
        accidentals_sigma = math.sqrt(accidentals_per_interval)
    c = np.asarray(counts, dtype=float)
    net = c - accidentals_per_interval
    sig = np.sqrt(np.clip(c, 1.0, None))
    fit = fit_fringe_xy(phases_rad, net, count_sigmas=sig)
    if fit.mean_level <= 0:
        raise InsufficientDataError(
            "background level exceeds the fitted mean; nothing left after subtraction",
            diagnostics={"net_mean": fit.mean_level,
                         "accidentals": accidentals_per_interval})
    extra = fit.visibility * accidentals_sigma / fit.mean_level
    sigma_v = math.hypot(fit.visibility_sigma, extra)
    fit = FringeFit(mean_level=fit.mean_level, visibility=fit.visibility,
                    visibility_sigma=sigma_v, phase_offset_rad=fit.phase_offset_rad,
                    chi_square_per_dof=fit.chi_square_per_dof, n_points=fit.n_points,
                    suspect=fit.suspect)
    return SubtractionResult(net_counts=net, fit=fit)


def subtract_accidentals(records, accidentals_per_interval: float,
                         accidentals_sigma: float | None = None) -> SubtractionResult:
    """Accidental subtraction on a scan's CountRecords."""
    phases, counts = _records_xy(list(records))
    return subtract_accidentals_xy(phases, counts, accidentals_per_interval,
                                   accidentals_sigma)


def _envelope_model(dd, v0, lc, wavelength_um):
    return v0 * np.exp(-((wavelength_um * dd) / (2.0 * math.pi * lc)) ** 2)


def fit_envelope(mismatches_um, visibilities, visibility_sigmas,
                 center_wavelength_nm: float) -> EnvelopeFit:
    """Coherence length from visibility versus path mismatch."""
    dd = np.asarray(mismatches_um, dtype=float)
    v = np.asarray(visibilities, dtype=float)
    sig = np.asarray(visibility_sigmas, dtype=float)
    if dd.shape != v.shape or dd.shape != sig.shape or dd.ndim != 1:
        raise ValueError("mismatches, visibilities and sigmas must be 1-d and equal length")
    if np.unique(dd).shape[0] < 5:
        raise InsufficientDataError(
            "envelope fit needs at least 5 distinct mismatch settings",
            diagnostics={"distinct_mismatches": int(np.unique(dd).shape[0])})
    if np.any(sig <= 0):
        raise ValueError("visibility_sigmas must be positive")
    lam_um = center_wavelength_nm * 1e-3
    v0_guess = max(float(v.max()), 1e-3)
    lc_guess = None
    for k in np.argsort(dd):
        if dd[k] > 0 and v[k] < 0.5 * v0_guess:
            lc_guess = lam_um * dd[k] / (2.0 * math.pi * math.sqrt(math.log(2.0)))
            break
    if lc_guess is None:
        lc_guess = lam_um * float(dd.max() + 1.0) / (2.0 * math.pi)

    def model(x, v0, lc):
        return _envelope_model(x, v0, lc, lam_um)

    try:
        popt, pcov = curve_fit(model, dd, v, p0=(v0_guess, max(lc_guess, 1e-3)),
                               sigma=sig, absolute_sigma=True,
                               bounds=([0.0, 1e-6], [1.5, np.inf]), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"envelope fit did not converge: {exc}",
                       diagnostics={"v0_guess": v0_guess, "lc_guess": lc_guess}) from None
    var_v0, var_lc = float(pcov[0, 0]), float(pcov[1, 1])
    if not (np.isfinite(var_lc) and var_lc > 0 and np.isfinite(var_v0) and var_v0 > 0):
        raise FitError("envelope fit produced a singular covariance",
                       diagnostics={"popt": list(map(float, popt))})
    resid = (v - model(dd, *popt)) / sig
    dof = max(dd.shape[0] - 2, 1)
    return EnvelopeFit(peak_visibility=float(popt[0]),
                       peak_visibility_sigma=math.sqrt(var_v0),
                       coherence_length_um=float(popt[1]),
                       coherence_length_sigma_um=math.sqrt(var_lc),
                       chi_square_per_dof=float(np.sum(resid ** 2) / dof),
                       _wavelength_um=lam_um)


def bell_report(raw_fit: FringeFit, net_fit: FringeFit,
                accidentals_per_interval: float) -> BellReport:
    """Assemble the final verdict from the raw and net fringe fits."""
    return BellReport(
        raw_visibility=raw_fit.visibility,
        raw_visibility_sigma=raw_fit.visibility_sigma,
        net_visibility=net_fit.visibility,
        net_visibility_sigma=net_fit.visibility_sigma,
        accidentals_per_interval=float(accidentals_per_interval),
        threshold=BELL_VISIBILITY_THRESHOLD,
        sigma_violation=bell_violation_sigma(net_fit.visibility,
                                             net_fit.visibility_sigma),
    )


def bootstrap_visibility_sigma(phases_rad, counts, n_boot: int = 200,
                               seed: int = 0) -> float:
    """Parametric bootstrap cross-check of the fit-covariance sigma:
    redraw each point as Poisson around the fitted model and refit."""
    fit = fit_fringe_xy(phases_rad, counts)
    phi = np.asarray(phases_rad, dtype=float)
    expected = np.clip(_fringe(phi, fit.mean_level, fit.visibility,
                               fit.phase_offset_rad), 0.0, None)
    values = []
    for b in range(n_boot):
        rng = stream(seed, "bootstrap", b)
        try:
            values.append(fit_fringe_xy(phi, rng.poisson(expected)).visibility)
        except FitError:
            continue
    if len(values) < max(10, n_boot // 4):
        raise FitError("bootstrap failed on too many replicas",
                       diagnostics={"succeeded": len(values), "requested": n_boot})
    return float(np.std(values, ddof=1))


def three_peak_areas(diffs_ps, separation_ps: float, window_ps: float):
    """Counts in windows centered on -separation, 0, +separation."""
    if separation_ps <= 0 or window_ps <= 0:
        raise ValueError("separation_ps and window_ps must be positive")
    if window_ps > separation_ps:
        raise ValueError("peak windows would overlap")
    d = np.asarray(diffs_ps)
    half = 0.5 * window_ps
    return tuple(int(np.count_nonzero(np.abs(d - c) <= half))
                 for c in (-separation_ps, 0.0, separation_ps))
