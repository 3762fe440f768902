"""Control schedules: per-channel bias waveforms and microwave pulses.

A `ControlSchedule` holds one `Waveform` per control channel (CHANNELS order)
plus a list of `MicrowavePulse` drives on the data qubits.  Waveforms are
piecewise: constant, linear-ramp, or tabulated segments; tabulated segments
are interpreted as piecewise-linear interpolants of their sample grid, so all
time integrals used by the propagator are exact for the stored waveform.

The propagator needs, for any window [a, b] inside one segment, the centered
moments

    M0 = integral u(s) ds,      M1c = integral (s - mid) u(s) ds

with mid = (a+b)/2; these determine a fourth-order commutator-free step
without numerical quadrature.  Centered forms avoid the catastrophic
cancellation of raw first moments at late schedule times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CHANNELS, N_CHANNELS

_TIME_ATOL = 1e-9


def _linear_centered_moments(
    a: float, b: float, ua: float, ub: float
) -> tuple[float, float]:
    """Centered moments of the linear function through (a, ua), (b, ub)."""
    h = b - a
    mean = 0.5 * (ua + ub)
    slope = (ub - ua) / h
    return mean * h, slope * h**3 / 12.0


@dataclass(frozen=True)
class Segment:
    """One waveform piece on [t0, t1].

    kind is "constant", "linear", or "tabulated".  Constant/linear pieces are
    described by endpoint values (v0, v1); tabulated pieces carry a sample
    grid interpreted piecewise-linearly.
    """

    t0: float
    t1: float
    kind: str
    v0: float
    v1: float
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.t1 <= self.t0:
            raise ValueError("segment must have positive duration")
        if self.kind not in ("constant", "linear", "tabulated"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind == "constant" and self.v0 != self.v1:
            raise ValueError("constant segment with differing endpoint values")
        if self.kind == "tabulated":
            t, v = self.times, self.values
            if t is None or v is None or len(t) != len(v) or len(t) < 2:
                raise ValueError("tabulated segment needs matching sample arrays")
            if abs(t[0] - self.t0) > _TIME_ATOL or abs(t[-1] - self.t1) > _TIME_ATOL:
                raise ValueError("sample grid must span the segment")
            if np.any(np.diff(t) <= 0):
                raise ValueError("sample times must increase")

    @property
    def is_static(self) -> bool:
        return self.kind == "constant"

    def value(self, t: float | np.ndarray):
        if self.kind == "constant":
            return self.v0 if np.isscalar(t) else np.full(np.shape(t), self.v0)
        if self.kind == "linear":
            frac = (np.asarray(t) - self.t0) / (self.t1 - self.t0)
            out = self.v0 + (self.v1 - self.v0) * frac
            return float(out) if np.isscalar(t) else out
        out = np.interp(t, self.times, self.values)
        return float(out) if np.isscalar(t) else out

    def centered_moments(self, a: float, b: float) -> tuple[float, float]:
        """(M0, M1c) over [a, b], which must lie within the segment."""
        if a < self.t0 - _TIME_ATOL or b > self.t1 + _TIME_ATOL or b <= a:
            raise ValueError("moment window outside segment")
        if self.kind == "constant":
            return self.v0 * (b - a), 0.0
        if self.kind == "linear":
            return _linear_centered_moments(a, b, self.value(a), self.value(b))
        return self._tabulated_moments(a, b)

    def _tabulated_moments(self, a: float, b: float) -> tuple[float, float]:
        t, v = self.times, self.values
        mid = 0.5 * (a + b)
        # Knots strictly inside (a, b) split the window into linear pieces.
        lo = int(np.searchsorted(t, a, side="right"))
        hi = int(np.searchsorted(t, b, side="left"))
        knots = np.concatenate(([a], t[lo:hi], [b]))
        vals = np.interp(knots, t, v)
        left_t, right_t = knots[:-1], knots[1:]
        left_v, right_v = vals[:-1], vals[1:]
        h = right_t - left_t
        mean = 0.5 * (left_v + right_v)
        slope = np.where(h > 0, (right_v - left_v) / np.where(h > 0, h, 1.0), 0.0)
        m0_cells = mean * h
        centers = 0.5 * (left_t + right_t)
        m1_cells = slope * h**3 / 12.0 + (centers - mid) * m0_cells
        return float(np.sum(m0_cells)), float(np.sum(m1_cells))


@dataclass(frozen=True)
class Waveform:
    """Contiguous segments covering [0, duration] for one channel."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("waveform needs at least one segment")
        if abs(self.segments[0].t0) > _TIME_ATOL:
            raise ValueError("waveform must start at t = 0")
        t = self.segments[0].t0
        for seg in self.segments:
            if abs(seg.t0 - t) > _TIME_ATOL:
                raise ValueError("segments must be contiguous")
            t = seg.t1

    @property
    def duration(self) -> float:
        return self.segments[-1].t1

    @staticmethod
    def constant(value: float, duration: float) -> "Waveform":
        return Waveform((Segment(0.0, duration, "constant", value, value),))

    def segment_at(self, t: float) -> Segment:
        """Segment containing t; boundaries belong to the opening segment."""
        if not -_TIME_ATOL <= t <= self.duration + _TIME_ATOL:
            raise ValueError(f"time {t} outside waveform")
        index = int(np.searchsorted(self.edges(), t, side="right")) - 1
        return self.segments[min(max(index, 0), len(self.segments) - 1)]

    def value(self, t: float) -> float:
        return float(self.segment_at(t).value(t))

    def edges(self) -> np.ndarray:
        return np.array([self.segments[0].t0] + [s.t1 for s in self.segments])


@dataclass(frozen=True)
class MicrowavePulse:
    """Flat-top cosine drive on one data qubit's energy bias.

    The envelope rises linearly from 0 over ``edge`` ns, holds at ``amp``,
    and falls linearly over ``edge`` ns; the drive multiplies
    cos(2*pi*freq*t + phase) in the lab frame.
    """

    qubit: int  # 0 or 1
    t0: float
    duration: float
    amp: float
    freq: float
    phase: float
    edge: float = 0.1

    def __post_init__(self) -> None:
        if self.qubit not in (0, 1):
            raise ValueError("pulses drive data qubits 0 or 1 only")
        if self.duration < 2 * self.edge - _TIME_ATOL:
            raise ValueError("pulse shorter than its rise and fall edges")
        if self.amp < 0 or self.freq <= 0 or self.edge <= 0:
            raise ValueError("pulse amplitude/frequency/edge must be positive")

    @property
    def t1(self) -> float:
        return self.t0 + self.duration

    def sub_edges(self) -> tuple[float, ...]:
        return (self.t0, self.t0 + self.edge, self.t1 - self.edge, self.t1)

    def envelope(self, t: float | np.ndarray):
        t = np.asarray(t, dtype=float)
        rise = np.clip((t - self.t0) / self.edge, 0.0, 1.0)
        fall = np.clip((self.t1 - t) / self.edge, 0.0, 1.0)
        inside = (t >= self.t0) & (t <= self.t1)
        out = self.amp * np.minimum(rise, fall) * inside
        return float(out) if out.ndim == 0 else out

    def value(self, t: float | np.ndarray):
        """Drive waveform: envelope times carrier."""
        t_arr = np.asarray(t, dtype=float)
        out = self.envelope(t_arr) * np.cos(
            2.0 * math.pi * self.freq * t_arr + self.phase
        )
        return float(out) if out.ndim == 0 else out

    def _envelope_linear_coeffs(self, a: float, b: float) -> tuple[float, float]:
        """Envelope as A_mid + d*(s - mid) over [a, b] (one linear piece)."""
        ea, eb = self.envelope(a), self.envelope(b)
        return 0.5 * (ea + eb), (eb - ea) / (b - a)

    def centered_moments(self, a: float, b: float) -> tuple[float, float]:
        """(M0, M1c) of envelope*carrier over [a, b].

        [a, b] must lie within one linear piece of the envelope (the
        propagator splits at `sub_edges`).  Closed forms of the oscillatory
        integrals; no quadrature.
        """
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        amp_mid, slope = self._envelope_linear_coeffs(a, b)
        omega = 2.0 * math.pi * self.freq
        theta = omega * mid + self.phase
        sin_t, cos_t = math.sin(theta), math.cos(theta)
        wh = omega * half
        sin_wh, cos_wh = math.sin(wh), math.cos(wh)
        # integrals over tau in [-half, half]:
        int_cos = 2.0 * sin_wh / omega * cos_t
        int_tau_cos = -2.0 * sin_t * (sin_wh / omega**2 - half * cos_wh / omega)
        int_tau2_cos = 2.0 * cos_t * (
            half**2 * sin_wh / omega
            + 2.0 * half * cos_wh / omega**2
            - 2.0 * sin_wh / omega**3
        )
        m0 = amp_mid * int_cos + slope * int_tau_cos
        m1c = amp_mid * int_tau_cos + slope * int_tau2_cos
        return m0, m1c


@dataclass(frozen=True)
class Event:
    """Schedule annotation used for echo accounting and trace output."""

    kind: str
    t0: float
    t1: float
    qubit: int | None = None


@dataclass(frozen=True)
class ControlSchedule:
    """Complete control program: six channel waveforms plus drive pulses."""

    waveforms: tuple[Waveform, ...]
    pulses: tuple[MicrowavePulse, ...] = ()
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        if len(self.waveforms) != N_CHANNELS:
            raise ValueError(f"need {N_CHANNELS} waveforms ({CHANNELS})")
        durations = {round(w.duration, 9) for w in self.waveforms}
        if len(durations) != 1:
            raise ValueError("all channel waveforms must share one duration")
        for pulse in self.pulses:
            if pulse.t0 < -_TIME_ATOL or pulse.t1 > self.duration + _TIME_ATOL:
                raise ValueError("pulse extends outside the schedule")

    @property
    def duration(self) -> float:
        return self.waveforms[0].duration

    def channel_values(self, t: float) -> np.ndarray:
        """Bias values (eps1, delta1, eps2, delta2, epsC, deltaC) at time t."""
        return np.array([w.value(t) for w in self.waveforms])

    def drive_values(self, t: float) -> np.ndarray:
        """Instantaneous drive contribution to each data qubit's bias."""
        drive = np.zeros(2)
        for pulse in self.pulses:
            if pulse.t0 <= t <= pulse.t1:
                drive[pulse.qubit] += pulse.value(t)
        return drive

    def breakpoints(self) -> np.ndarray:
        """Sorted unique times at which any waveform or pulse changes form."""
        times = [w.edges() for w in self.waveforms]
        times += [np.array(p.sub_edges()) for p in self.pulses]
        merged = np.unique(np.concatenate(times))
        # Collapse numerically-coincident breakpoints.
        keep = [merged[0]]
        for t in merged[1:]:
            if t - keep[-1] > _TIME_ATOL:
                keep.append(t)
        return np.array(keep)

    def active_pulses(self, a: float, b: float) -> tuple[MicrowavePulse, ...]:
        return tuple(
            p for p in self.pulses if p.t0 <= a + _TIME_ATOL and b <= p.t1 + _TIME_ATOL
        )


def tabulate(fn, t0: float, t1: float, dt: float) -> Segment:
    """Sample ``fn`` on a uniform grid and wrap it as a tabulated segment."""
    n = max(2, int(math.ceil((t1 - t0) / dt)) + 1)
    times = np.linspace(t0, t1, n)
    values = np.array([float(fn(t)) for t in times])
    return Segment(t0, t1, "tabulated", values[0], values[-1], times, values)
