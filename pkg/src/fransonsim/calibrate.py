"""One-time calibration of the bundled scenario's source constants.

Three scenario constants cannot be read off a bench sheet because they
hide behind the whole detection chain: the raw pair rate and the two
afterpulse probabilities.  This script pins them against three recorded
observables:

* recorded singles rates of 164 and 167 kHz at the two stations, and
* a raw fringe visibility of 0.46, equivalently a true-coincidence to
  background ratio S/B with 0.816 * S / (S + B) = 0.46.

The procedure alternates a multiplicative pair-rate update (the true
coincidence level is proportional to the pair rate at fixed singles)
with secant steps on each afterpulse probability toward the singles
targets, at growing integration times.  Run it once, copy the printed
constants into the scenario file, and re-run to confirm:

    python -m fransonsim.calibrate
"""

from __future__ import annotations

import math
from dataclasses import replace

from .model import PhaseSetting
from .montecarlo import simulate_point
from .scenario import bundled_scenario_path, load_scenario

SINGLES_TARGETS_HZ = (164_000.0, 167_000.0)
RAW_VISIBILITY_TARGET = 0.46
SEED = 20260816

# 0.816 * S / (S + B) = 0.46  =>  S = RATIO * B
_RATIO = RAW_VISIBILITY_TARGET / (0.816 - RAW_VISIBILITY_TARGET)


def _with_constants(scenario, pair_rate_hz, p1, p2):
    return replace(
        scenario,
        source=replace(scenario.source, pair_rate_hz=pair_rate_hz),
        detector1=replace(scenario.detector1, afterpulse_probability=p1),
        detector2=replace(scenario.detector2, afterpulse_probability=p2),
    )


def _measure(scenario, duration_s, tag, chunk_s=16.0):
    """Fringe mean level, accidental level and singles rates.

    Two phase-quadrature settings sit on the fringe mean, so their
    windowed counts estimate the level M = S + B directly without a fit.
    Long integrations run as independent fixed-size chunks to keep the
    per-call event arrays small.
    """
    base1 = scenario.interferometer1.phase_rad
    n_chunks = max(1, int(round(duration_s / chunk_s)))
    recs = [
        simulate_point(scenario, PhaseSetting(base1, phi), chunk_s, SEED,
                       point_label=f"calibrate-{tag}-{k}-{c}")
        for k, phi in enumerate((0.5 * math.pi, 1.5 * math.pi))
        for c in range(n_chunks)
    ]
    per20 = 20.0 / (chunk_s * n_chunks)
    half = len(recs) // 2
    mean_level = sum(r.windowed_coincidences for r in recs) / 2 * per20
    background = sum(r.offwindow_coincidences for r in recs) / 2 * per20
    r1 = sum(r.singles1_rate_hz for r in recs) / (2 * half)
    r2 = sum(r.singles2_rate_hz for r in recs) / (2 * half)
    return mean_level, background, r1, r2


def _secant_step(history, target, p_now):
    """Next afterpulse probability from the last one or two (p, rate) points."""
    (p_a, r_a) = history[-1]
    if len(history) >= 2 and abs(history[-2][1] - r_a) > 1.0:
        (p_b, r_b) = history[-2]
        p_next = p_a + (target - r_a) * (p_a - p_b) / (r_a - r_b)
    else:
        # recorded rate scales like base / (1 - p) before saturation
        p_next = p_a + (target - r_a) * (1.0 - p_a) / r_a
    return min(max(p_next, 0.0), 0.8)


def calibrate(schedule=(8.0, 8.0, 16.0, 32.0, 64.0, 64.0), damping=1.0,
              start=None, tag="coarse", verbose=True):
    """Alternate pair-rate and afterpulse updates over the given schedule.

    damping < 1 softens the multiplicative pair-rate correction, which
    keeps the long, precise rounds from chasing their own shot noise.
    """
    scenario = load_scenario(bundled_scenario_path("geneva1998"))
    if start is None:
        start = (scenario.source.pair_rate_hz,
                 scenario.detector1.afterpulse_probability,
                 scenario.detector2.afterpulse_probability)
    pair_rate, p1, p2 = start
    hist1, hist2 = [], []

    for round_idx, duration in enumerate(schedule):
        scn = _with_constants(scenario, pair_rate, p1, p2)
        mean_level, background, r1, r2 = _measure(scn, duration,
                                                  f"{tag}-{round_idx}")
        true_level = mean_level - background
        if verbose:
            print(f"{tag} {round_idx}: dur {duration:>4.0f} s  "
                  f"pair_rate {pair_rate:9.1f}  p1 {p1:.4f}  p2 {p2:.4f}  ->  "
                  f"singles {r1:8.0f}/{r2:8.0f}  M {mean_level:6.1f}  "
                  f"B {background:5.1f}  S {true_level:6.1f}")
        hist1.append((p1, r1))
        hist2.append((p2, r2))
        if true_level > 0 and background > 0:
            factor = _RATIO * background / true_level
            pair_rate *= min(max(factor, 0.5), 2.0) ** damping
        p1 = _secant_step(hist1, SINGLES_TARGETS_HZ[0], p1)
        p2 = _secant_step(hist2, SINGLES_TARGETS_HZ[1], p2)

    if verbose:
        print(f"\n{tag} constants:")
        print(f"  source.pair_rate_hz = {pair_rate:.1f}")
        print(f"  detector1.afterpulse_probability = {p1:.4f}")
        print(f"  detector2.afterpulse_probability = {p2:.4f}")
    return pair_rate, p1, p2


def verify(pair_rate, p1, p2, duration_s=20.0):
    """Longer confirmation run at the calibrated constants."""
    scenario = _with_constants(load_scenario(bundled_scenario_path("geneva1998")),
                               pair_rate, p1, p2)
    mean_level, background, r1, r2 = _measure(scenario, duration_s, "verify")
    true_level = mean_level - background
    raw_vis = 0.816 * true_level / mean_level if mean_level > 0 else float("nan")
    print(f"\nverify ({duration_s:.0f} s/point): singles {r1:.0f} / {r2:.0f} Hz, "
          f"M {mean_level:.1f}, B {background:.1f} per 20 s, implied raw V {raw_vis:.4f}")
    return r1, r2, mean_level, background


def main():
    constants = calibrate()
    constants = calibrate(schedule=(96.0, 96.0, 128.0, 128.0), damping=0.7,
                          start=constants, tag="fine")
    verify(*constants, duration_s=128.0)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
