"""Event-by-event simulation of the two-station fiber Bell experiment.

The chain follows the hardware: a source emits photon pairs at random
times, a coupler routes the two photons, each photon rides its fiber
(loss, transit, dispersion), picks an arm and an exit port in the local
analyzer, and is detected by an avalanche detector with efficiency,
timing jitter, dark counts, dead time and afterpulsing.  A start-stop
converter between the stations turns tag pairs into arrival-time
differences, from which windowed coincidences and the accidental
background are counted.

Interference enters only through the port statistics: same-arm pairs
draw their ports from the conditional fringe law, different-arm pairs
draw uniformly, which yields the familiar half-visibility interferogram
when all three arrival-time peaks are accepted and the full apparatus
visibility when only the central peak is kept.

All event times are integer picoseconds once they leave the detectors;
every random draw comes from a stream keyed on (seed, point label,
stage), so results are reproducible bit for bit and independent of how
scan points are distributed over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constants import FWHM_PER_SIGMA, PS_PER_NS, PS_PER_S, PS_PER_US
from .kernels import prune_dead_time, tphc_pass
from .model import PhaseSetting, SpectralParams, envelope
from .rngstreams import stream
from .scenario import DetectorParams, ElectronicsParams, FiberChannel, Scenario, SourceParams

__all__ = [
    "ORIGIN_PHOTON",
    "ORIGIN_DARK",
    "ORIGIN_AFTERPULSE",
    "PairBatch",
    "TagStream",
    "CountRecord",
    "emit_pairs",
    "route_at_coupler",
    "sample_paths_and_ports",
    "propagate",
    "detect",
    "paired_differences",
    "coincidence_histogram",
    "windowed_coincidences",
    "count_in_window",
    "bin_differences",
    "simulate_point",
    "run_scan",
    "measure_accidentals",
]

_SHORT, _LONG = 0, 1
_SPLIT, _BOTH_TO_1, _BOTH_TO_2 = 0, 1, 2

ORIGIN_PHOTON = 0
ORIGIN_DARK = 1
ORIGIN_AFTERPULSE = 2


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Emission times (sorted, float ps) and spectral detunings of the
    pairs produced in one interval.  The two photons of pair k sit at
    center + detuning_nm[k] and center - detuning_nm[k]."""

    emission_ps: np.ndarray
    detuning_nm: np.ndarray

    def __len__(self):
        return self.emission_ps.shape[0]


@dataclass(frozen=True, eq=False)
class TagStream:
    """Recorded events of one detector: sorted int64 ps times plus an
    origin code per tag (photon / dark / afterpulse), kept for
    diagnostics only."""

    times_ps: np.ndarray
    origins: np.ndarray

    def __len__(self):
        return self.times_ps.shape[0]


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Everything one scan point produces."""

    phase: PhaseSetting
    duration_s: float
    singles1: int
    singles2: int
    windowed_coincidences: int
    offwindow_coincidences: int
    histogram_bin_width_ps: float
    histogram_centers_ps: np.ndarray
    histogram_counts: np.ndarray
    accepted_starts: int
    conversions: int
    windowed_by_ports: dict
    diffs_ps: np.ndarray | None = None
    start_ports: np.ndarray | None = None
    stop_ports: np.ndarray | None = None

    @property
    def singles1_rate_hz(self) -> float:
        return self.singles1 / self.duration_s

    @property
    def singles2_rate_hz(self) -> float:
        return self.singles2 / self.duration_s


def emit_pairs(source: SourceParams, spectral: SpectralParams, duration_s: float,
               rng) -> PairBatch:
    """Poisson pair emission over [0, duration).

    Times are uniform order statistics (a Poisson process conditioned on
    its count).  Each pair draws one detuning whose distribution gives
    either photon the configured per-photon bandwidth; the pump is
    treated as monochromatic so the photons sit symmetrically about the
    center wavelength.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s!r}")
    n = rng.poisson(source.pair_rate_hz * duration_s)
    times = np.sort(rng.random(n) * (duration_s * PS_PER_S))
    sigma_nm = spectral.bandwidth_fwhm_nm / FWHM_PER_SIGMA
    detuning = rng.normal(0.0, sigma_nm, n)
    return PairBatch(emission_ps=times, detuning_nm=detuning)


def route_at_coupler(n_pairs: int, split_probability: float, rng) -> np.ndarray:
    """Routing code per pair: 0 photons split across stations, 1 both
    to station 1, 2 both to station 2.  The two bunched cases share the
    leftover probability evenly."""
    u = rng.random(n_pairs)
    codes = np.zeros(n_pairs, dtype=np.int8)
    codes[u >= split_probability] = _BOTH_TO_1
    codes[u >= 0.5 * (1.0 + split_probability)] = _BOTH_TO_2
    return codes


def sample_paths_and_ports(n_pairs: int, phase: PhaseSetting, effective_visibility: float,
                           rng):
    """Arm choices and exit ports for every pair.

    Arms are 50/50 at both analyzers, so the four arm pairs are uniform.
    For same-arm pairs the second port follows the conditional fringe
    law P(j = + | i) = (1 + i V cos(d1 + d2)) / 2; different-arm pairs
    leave through uncorrelated ports.  Either way both port marginals
    stay uniform, which is why the singles never show fringes.
    """
    if not 0.0 <= effective_visibility <= 1.0:
        raise ValueError(
            f"effective visibility must lie in [0, 1], got {effective_visibility!r}")
    path1 = (rng.random(n_pairs) < 0.5).astype(np.int8)
    path2 = (rng.random(n_pairs) < 0.5).astype(np.int8)
    port1 = np.where(rng.random(n_pairs) < 0.5, 1, -1).astype(np.int8)
    correlation = effective_visibility * np.cos(phase.phase_sum_rad)
    p_plus = np.where(path1 == path2, 0.5 * (1.0 + port1 * correlation), 0.5)
    port2 = np.where(rng.random(n_pairs) < p_plus, 1, -1).astype(np.int8)
    return path1, path2, port1, port2


def _dispersion_delays(fiber: FiberChannel, detuning_nm: np.ndarray, spectral,
                       rng) -> np.ndarray:
    n = detuning_nm.shape[0]
    if fiber.dispersion_mode == "lumped":
        if fiber.lumped_jitter_fwhm_ps == 0.0:
            return np.zeros(n)
        # configured value is the pair-differential FWHM; each photon
        # contributes 1/sqrt(2) of it
        sigma = fiber.lumped_jitter_fwhm_ps / np.sqrt(2.0) / FWHM_PER_SIGMA
        return rng.normal(0.0, sigma, n)
    wavelength = spectral.center_wavelength_nm + detuning_nm
    offset = wavelength - fiber.zero_dispersion_wavelength_nm
    return 0.5 * fiber.dispersion_slope_ps_nm2_km * fiber.length_km * offset ** 2


def propagate(fiber: FiberChannel, emission_ps: np.ndarray, detuning_nm: np.ndarray,
              spectral: SpectralParams, rng):
    """Fiber transport: survival thinning plus group delay.

    Returns (alive_mask, arrival_ps) where arrival_ps holds only the
    survivors: emission + length * group_index / c + dispersion term.
    """
    alive = rng.random(emission_ps.shape[0]) < fiber.transmittance
    delays = _dispersion_delays(fiber, detuning_nm[alive], spectral, rng)
    arrivals = emission_ps[alive] + fiber.transit_time_ps + delays
    return alive, arrivals


def _afterpulse_children(kept_ps: np.ndarray, det: DetectorParams, rng) -> np.ndarray:
    """Geometric cascade of correlated afterpulses: every recorded event
    spawns a follow-up with probability p after the dead time plus an
    exponential tail, and the follow-up can itself spawn another."""
    p = det.afterpulse_probability
    counts = rng.geometric(1.0 - p, kept_ps.shape[0]) - 1
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    seeded = counts > 0
    dead_ps = det.dead_time_ns * PS_PER_NS
    gaps = dead_ps + rng.exponential(det.afterpulse_tau_ns * PS_PER_NS, total)
    cum = np.cumsum(gaps)
    seg_starts = np.concatenate(([0], np.cumsum(counts)))[:-1][seeded]
    base = np.where(seg_starts > 0, cum[seg_starts - 1], 0.0)
    offsets = cum - np.repeat(base, counts[seeded])
    parents = np.repeat(kept_ps[seeded], counts[seeded])
    return np.rint(parents + offsets).astype(np.int64)


def detect(det: DetectorParams, arrivals_ps: np.ndarray, chain_jitter_fwhm_ps: float,
           duration_ps: int, rng) -> TagStream:
    """Recorded events of one physical detector.

    Pipeline: efficiency thinning, detector jitter, merge of the dark
    Poisson stream, non-paralyzable dead time, afterpulse cascades (dead
    time re-applied to the merged record), then the downstream signal
    chain jitter, which lands after the dead-time filter because it
    happens outside the diode.
    """
    kept = arrivals_ps[rng.random(arrivals_ps.shape[0]) < det.efficiency]
    if det.jitter_fwhm_ps > 0:
        kept = kept + rng.normal(0.0, det.jitter_fwhm_ps / FWHM_PER_SIGMA, kept.shape[0])
    n_dark = rng.poisson(det.dark_rate_hz * duration_ps / PS_PER_S)
    darks = rng.random(n_dark) * float(duration_ps)
    times = np.rint(np.concatenate((kept, darks))).astype(np.int64)
    origins = np.concatenate((np.full(kept.shape[0], ORIGIN_PHOTON, dtype=np.int8),
                              np.full(n_dark, ORIGIN_DARK, dtype=np.int8)))
    order = np.argsort(times, kind="stable")
    times, origins = times[order], origins[order]
    dead_ps = np.int64(round(det.dead_time_ns * PS_PER_NS))
    if dead_ps > 0 and times.shape[0] > 0:
        keep = prune_dead_time(times, dead_ps)
        times, origins = times[keep], origins[keep]
    if det.afterpulse_probability > 0 and times.shape[0] > 0:
        children = _afterpulse_children(times, det, rng)
        if children.shape[0] > 0:
            times = np.concatenate((times, children))
            origins = np.concatenate(
                (origins, np.full(children.shape[0], ORIGIN_AFTERPULSE, dtype=np.int8)))
            order = np.argsort(times, kind="stable")
            times, origins = times[order], origins[order]
            if dead_ps > 0:
                keep = prune_dead_time(times, dead_ps)
                times, origins = times[keep], origins[keep]
    if chain_jitter_fwhm_ps > 0 and times.shape[0] > 0:
        jittered = np.rint(times + rng.normal(
            0.0, chain_jitter_fwhm_ps / FWHM_PER_SIGMA, times.shape[0])).astype(np.int64)
        order = np.argsort(jittered, kind="stable")
        times, origins = jittered[order], origins[order]
    inside = (times >= 0) & (times < duration_ps)
    return TagStream(times_ps=times[inside], origins=origins[inside])


def _times_of(tags) -> np.ndarray:
    times = tags.times_ps if isinstance(tags, TagStream) else np.asarray(tags)
    return times.astype(np.int64, copy=False)


def paired_differences(tags1, tags2, electronics: ElectronicsParams,
                       stop_delay_ps: int = 0):
    """Start-stop differences under the converter model.

    The configured start station opens a conversion when the converter
    is idle; the first opposite-station tag within the converter range
    (after removing the stop-channel delay line stop_delay_ps) completes
    it; the converter then stays busy for its dead time.  Returns
    (diffs, start_indices, stop_indices, accepted_starts) with diffs
    centered: stop - stop_delay - start.
    """
    t1, t2 = _times_of(tags1), _times_of(tags2)
    starts, stops = (t1, t2) if electronics.start_station == 1 else (t2, t1)
    half_range = np.int64(round(electronics.tphc_range_ns * PS_PER_NS / 2))
    busy = np.int64(max(round(electronics.tphc_dead_time_us * PS_PER_US), int(half_range)))
    return tphc_pass(starts, stops, np.int64(stop_delay_ps), half_range, busy)


def count_in_window(diffs_ps: np.ndarray, window_ps: float, center_ps: float = 0.0) -> int:
    """Differences within a window of full width window_ps around center_ps."""
    if window_ps <= 0:
        raise ValueError(f"window_ps must be positive, got {window_ps!r}")
    return int(np.count_nonzero(np.abs(np.asarray(diffs_ps) - center_ps)
                                <= 0.5 * window_ps))


def bin_differences(diffs_ps: np.ndarray, bin_width_ps: float, span_ps: float):
    """Histogram differences on bins whose centers are integer multiples
    of the bin width, covering at least ±span_ps.  Returns (centers, counts)."""
    if bin_width_ps <= 0:
        raise ValueError(f"bin_width_ps must be positive, got {bin_width_ps!r}")
    if span_ps <= 0:
        raise ValueError(f"span_ps must be positive, got {span_ps!r}")
    m = int(np.floor((span_ps - 0.5 * bin_width_ps) / bin_width_ps)) + 1
    edges = (np.arange(-m, m + 2) - 0.5) * bin_width_ps
    counts, _ = np.histogram(np.asarray(diffs_ps), bins=edges)
    centers = np.arange(-m, m + 1) * float(bin_width_ps)
    return centers, counts


def coincidence_histogram(tags1, tags2, electronics: ElectronicsParams,
                          bin_width_ps: float = 100.0, span_ps: float | None = None,
                          stop_delay_ps: int = 0):
    """Arrival-difference histogram between the two stations.

    Pairing follows the start-stop converter semantics of
    paired_differences; the span defaults to the converter half-range.
    """
    if span_ps is None:
        span_ps = electronics.tphc_range_ns * PS_PER_NS / 2
    diffs, _, _, _ = paired_differences(tags1, tags2, electronics, stop_delay_ps)
    return bin_differences(diffs, bin_width_ps, span_ps)


def windowed_coincidences(tags1, tags2, electronics: ElectronicsParams,
                          window_center_ps: float = 0.0, stop_delay_ps: int = 0) -> int:
    """Completed conversions with |difference - window_center| <= window/2.

    Shifting window_center by the accidental delay measures the flat
    background instead of the true peak."""
    diffs, _, _, _ = paired_differences(tags1, tags2, electronics, stop_delay_ps)
    return count_in_window(diffs, electronics.window_ps, window_center_ps)


def _station_photons(pairs: PairBatch, codes, station, path1, path2, port1, port2):
    """Emission times, detunings, arms and ports of the photons headed
    to one station.  Bunched pairs contribute both photons."""
    if station == 1:
        split_here, both_here = codes == _SPLIT, codes == _BOTH_TO_1
        own_path, own_port, own_sign = path1, port1, 1.0
        other_path, other_port = path2, port2
    else:
        split_here, both_here = codes == _SPLIT, codes == _BOTH_TO_2
        own_path, own_port, own_sign = path2, port2, -1.0
        other_path, other_port = path1, port1
    t = np.concatenate((pairs.emission_ps[split_here], pairs.emission_ps[both_here],
                        pairs.emission_ps[both_here]))
    detuning = np.concatenate((own_sign * pairs.detuning_nm[split_here],
                               own_sign * pairs.detuning_nm[both_here],
                               -own_sign * pairs.detuning_nm[both_here]))
    paths = np.concatenate((own_path[split_here], own_path[both_here],
                            other_path[both_here]))
    ports = np.concatenate((own_port[split_here], own_port[both_here],
                            other_port[both_here]))
    return t, detuning, paths, ports


def simulate_point(scenario: Scenario, phase: PhaseSetting, duration_s: float,
                   seed: int, point_label=0, histogram_bin_ps: float = 100.0,
                   keep_conversions: bool = False) -> CountRecord:
    """Simulate one scan point of duration_s seconds at one phase setting."""
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s!r}")
    duration_ps = int(round(duration_s * PS_PER_S))
    veff = scenario.visibility.apparatus_visibility * envelope(
        phase.path_mismatch_um, scenario.spectral)

    pairs = emit_pairs(scenario.source, scenario.spectral, duration_s,
                       stream(seed, "point", point_label, "emit"))
    codes = route_at_coupler(len(pairs), scenario.source.split_probability,
                             stream(seed, "point", point_label, "route"))
    path1, path2, port1, port2 = sample_paths_and_ports(
        len(pairs), phase, veff, stream(seed, "point", point_label, "correlations"))

    station_times = {}
    station_ports = {}
    for s in (1, 2):
        t, detuning, paths, ports = _station_photons(
            pairs, codes, s, path1, path2, port1, port2)
        alive, arrivals = propagate(scenario.fiber(s), t, detuning, scenario.spectral,
                                    stream(seed, "point", point_label, "fiber", s))
        paths, ports = paths[alive], ports[alive]
        interferometer = scenario.interferometer(s)
        arrivals = arrivals + paths * interferometer.arm_imbalance_delay_ps
        det = scenario.detector(s)
        tag_list, tag_ports = [], []
        for p in interferometer.instrumented_ports:
            tags = detect(det, arrivals[ports == p],
                          scenario.electronics.chain_jitter_fwhm_ps, duration_ps,
                          stream(seed, "point", point_label, "detector", s, p))
            tag_list.append(tags.times_ps)
            tag_ports.append(np.full(len(tags), p, dtype=np.int8))
        times = np.concatenate(tag_list)
        prt = np.concatenate(tag_ports)
        order = np.argsort(times, kind="stable")
        station_times[s] = times[order]
        station_ports[s] = prt[order]

    el = scenario.electronics
    start_s = el.start_station
    stop_s = 2 if start_s == 1 else 1
    stop_delay_ps = int(round(scenario.fiber(stop_s).transit_time_ps
                              - scenario.fiber(start_s).transit_time_ps))
    diffs, i_start, i_stop, accepted = paired_differences(
        station_times[start_s], station_times[stop_s], el, stop_delay_ps)

    windowed_mask = np.abs(diffs) <= 0.5 * el.window_ps
    offwindow = count_in_window(diffs, el.window_ps, el.accidental_delay_ns * PS_PER_NS)
    sports = station_ports[start_s][i_start]
    tports = station_ports[stop_s][i_stop]
    by_ports = {(i, j): int(np.count_nonzero(windowed_mask & (sports == i) & (tports == j)))
                for i in (1, -1) for j in (1, -1)}
    centers, counts = bin_differences(diffs, histogram_bin_ps,
                                      el.tphc_range_ns * PS_PER_NS / 2)

    return CountRecord(
        phase=phase,
        duration_s=duration_s,
        singles1=int(station_times[1].shape[0]),
        singles2=int(station_times[2].shape[0]),
        windowed_coincidences=int(np.count_nonzero(windowed_mask)),
        offwindow_coincidences=offwindow,
        histogram_bin_width_ps=float(histogram_bin_ps),
        histogram_centers_ps=centers,
        histogram_counts=counts,
        accepted_starts=int(accepted),
        conversions=int(diffs.shape[0]),
        windowed_by_ports=by_ports,
        diffs_ps=diffs if keep_conversions else None,
        start_ports=sports if keep_conversions else None,
        stop_ports=tports if keep_conversions else None,
    )


def run_scan(scenario: Scenario, phase_settings, duration_per_point_s: float, seed: int,
             workers: int | None = None, histogram_bin_ps: float = 100.0,
             keep_conversions: bool = False):
    """One CountRecord per phase setting, in order.

    Each point draws from streams keyed on (seed, point index), so the
    result is identical for any worker count or evaluation order."""
    phase_settings = list(phase_settings)
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    args = [(i, ph) for i, ph in enumerate(phase_settings)]
    if workers <= 1 or len(args) <= 1:
        return [simulate_point(scenario, ph, duration_per_point_s, seed, point_label=i,
                               histogram_bin_ps=histogram_bin_ps,
                               keep_conversions=keep_conversions)
                for i, ph in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(simulate_point, scenario, ph, duration_per_point_s,
                               seed, i, histogram_bin_ps, keep_conversions)
                   for i, ph in args]
        return [f.result() for f in futures]


def measure_accidentals(scenario: Scenario, duration_s: float, seed: int,
                        full_record: bool = False):
    """Coincidences in the window shifted by the accidental delay, at the
    scenario's nominal phases: the flat-background estimate.  Returns the
    count, or the whole CountRecord when full_record is set."""
    phase = PhaseSetting(scenario.interferometer1.phase_rad,
                         scenario.interferometer2.phase_rad)
    record = simulate_point(scenario, phase, duration_s, seed,
                            point_label="accidentals")
    return record if full_record else record.offwindow_coincidences
