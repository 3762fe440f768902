"""Bias ramp geometry: adiabatic transfer ramps and coupler windows.

Transfer ramps sweep a qubit's tunnel splitting through its resonator
crossing.  The sweep spends its time budget where the crossing gap is small,
holding the two-level adiabaticity measure

    a(t) = |<e| dH/dt |g>| / (2*pi*gap^2) = |d(delta)/dt| * J / (2*pi*gap^3)

constant over the interior of the sweep, with smooth C2 speed tapers at both
ends so the bias starts and ends at rest.  Coupler windows move the coupler
bias along a straight line between
its parked and activated points with a smootherstep time profile.

This module is pure waveform geometry; calibration of durations against the
integrated dynamics lives in the compiler.
"""

from __future__ import annotations

import math

import numpy as np

from ..schedule import Segment

__all__ = [
    "ramp_adiabaticity",
    "smootherstep",
    "tabulated_segment",
    "transfer_ramp_values",
    "window_profile",
]

# Tapers cover at least the outer TAPER_SPAN fraction of the splitting span
# and at least TAPER_TIME ns of wall time on each side (a bare speed step at
# the boundary excites the crossing at a rate set by the step height, which
# only falls off algebraically with duration), but never exceed
# TAPER_TIME_CAP of the sweep duration.
_TAPER_SPAN = 0.04
_TAPER_TIME = 1.0
_TAPER_TIME_CAP = 0.2


def smootherstep(s: float | np.ndarray) -> float | np.ndarray:
    """C2 step: 0 below 0, 1 above 1, 6s^5 - 15s^4 + 10s^3 between."""
    s = np.clip(s, 0.0, 1.0)
    out = s**3 * (10.0 + s * (6.0 * s - 15.0))
    return float(out) if np.ndim(out) == 0 else out


def _crossing_gap(delta: np.ndarray, f_r: float, j: float) -> np.ndarray:
    return np.hypot(np.asarray(delta, dtype=float) - f_r, 2.0 * j)


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def transfer_ramp_values(
    f_r: float,
    j_res: float,
    delta_from: float,
    delta_to: float,
    duration: float,
    n: int = 4001,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a constant-adiabaticity splitting sweep.

    Returns ``(times, values)`` with times spanning [0, duration].  With no
    coupling (``j_res = 0``) there is no crossing to respect and the sweep
    degenerates to a straight line.
    """
    if duration <= 0:
        raise ValueError("ramp duration must be positive")
    if delta_from == delta_to:
        raise ValueError("ramp endpoints must differ")
    times = np.linspace(0.0, duration, n)
    if j_res == 0.0:
        frac = times / duration
        return times, delta_from + (delta_to - delta_from) * frac
    if j_res < 0.0:
        raise ValueError("coupling must be non-negative")

    # Clock coordinate: constant adiabaticity means d(delta)/dt ~ gap^3, so
    # equal clock increments du = |d(delta)| / gap^3 take equal time.  Work
    # in the normalized progress coordinate xi so the sweep direction does
    # not matter.
    xi = np.linspace(0.0, 1.0, 4 * n)
    grid = delta_from + (delta_to - delta_from) * xi
    density = abs(delta_to - delta_from) / _crossing_gap(grid, f_r, j_res) ** 3
    clock = _cumtrapz(density, xi)
    total = clock[-1]

    # Taper fractions: at least the clock share of the outer few percent of
    # the splitting span, and at least a fixed wall time so the start/stop
    # speed step is smoothed on a timescale long against the crossing gap.
    f_lo = np.interp(_TAPER_SPAN, xi, clock) / total
    f_hi = (total - np.interp(1.0 - _TAPER_SPAN, xi, clock)) / total
    f_lo = min(max(f_lo, _TAPER_TIME / duration), _TAPER_TIME_CAP)
    f_hi = min(max(f_hi, _TAPER_TIME / duration), _TAPER_TIME_CAP)

    sigma = times / duration
    speed = smootherstep(sigma / f_lo) * smootherstep((1.0 - sigma) / f_hi)
    progress = _cumtrapz(speed, sigma)
    progress *= total / progress[-1]
    values = np.interp(progress, clock, grid)
    values[0], values[-1] = delta_from, delta_to
    return times, values


def ramp_adiabaticity(
    f_r: float, j_res: float, times: np.ndarray, values: np.ndarray
) -> np.ndarray:
    """Two-level adiabaticity measure along a tabulated splitting sweep."""
    slope = np.gradient(np.asarray(values, dtype=float), np.asarray(times, dtype=float))
    gap = _crossing_gap(values, f_r, j_res)
    return np.abs(slope) * j_res / (2.0 * math.pi * gap**3)


def tabulated_segment(t0: float, times: np.ndarray, values: np.ndarray) -> Segment:
    """Wrap a (times, values) table starting at absolute time ``t0``."""
    shifted = np.asarray(times, dtype=float) + t0
    values = np.asarray(values, dtype=float)
    return Segment(
        shifted[0], shifted[-1], "tabulated", values[0], values[-1], shifted, values
    )


def window_profile(
    ramp_duration: float, samples_per_ns: float = 200.0
) -> tuple[np.ndarray, np.ndarray]:
    """Smootherstep activation profile s(t) for one coupler window edge."""
    if ramp_duration <= 0:
        raise ValueError("window ramp duration must be positive")
    n = max(32, int(round(ramp_duration * samples_per_ns)))
    times = np.linspace(0.0, ramp_duration, n + 1)
    return times, smootherstep(times / ramp_duration)
