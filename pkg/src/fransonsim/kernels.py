"""Hot loops over picosecond event times, compiled with numba.

Everything in here is int64-pure and deterministic: no RNG, no floats,
so results cannot drift between runs, platforms, or thread counts.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["prune_dead_time", "tphc_pass"]


@njit(cache=True)
def prune_dead_time(times, dead_ps):
    """Non-paralyzable dead time on a sorted int64 time array.

    Keeps an event iff it arrives at least dead_ps after the last kept
    event.  Returns a boolean keep mask aligned with the input.
    """
    n = times.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return keep
    keep[0] = True
    last = times[0]
    for k in range(1, n):
        if times[k] - last >= dead_ps:
            keep[k] = True
            last = times[k]
    return keep


@njit(cache=True)
def tphc_pass(start_times, stop_times, offset_ps, half_range_ps, busy_ps):
    """Start-stop converter over two sorted int64 event streams.

    A start at s opens a conversion if the converter is idle.  The first
    stop with stop - offset_ps in [s - half_range_ps, s + half_range_ps]
    completes it and yields the centered difference stop - offset_ps - s.
    Whether the conversion completes or runs off the end of the range,
    the converter stays busy until s + busy_ps (busy_ps >= the range
    half-width, so an open conversion is never abandoned early).

    Returns (diffs, start_idx, stop_idx, attempts): the centered
    differences of completed conversions, the indices of the start and
    stop events that formed them, and the number of accepted starts.
    """
    n_start = start_times.shape[0]
    n_stop = stop_times.shape[0]
    cap = n_start if n_start < n_stop else n_stop
    diffs = np.empty(cap, dtype=np.int64)
    start_idx = np.empty(cap, dtype=np.int64)
    stop_idx = np.empty(cap, dtype=np.int64)
    n_out = 0
    attempts = 0
    busy_until = np.int64(-(1 << 62))
    j0 = 0
    for i in range(n_start):
        s = start_times[i]
        if s < busy_until:
            continue
        attempts += 1
        busy_until = s + busy_ps
        lo = s + offset_ps - half_range_ps
        hi = s + offset_ps + half_range_ps
        # Accepted starts are increasing, so lo is too: stops below lo
        # can never serve a later conversion and j0 may advance for good.
        while j0 < n_stop and stop_times[j0] < lo:
            j0 += 1
        if j0 < n_stop and stop_times[j0] <= hi:
            diffs[n_out] = stop_times[j0] - offset_ps - s
            start_idx[n_out] = i
            stop_idx[n_out] = j0
            n_out += 1
            j0 += 1
    return diffs[:n_out], start_idx[:n_out], stop_idx[:n_out], attempts
