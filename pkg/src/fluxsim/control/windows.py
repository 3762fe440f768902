"""Coupler windows: entangling intervals and conditional-phase calibration.

A *window* brings the tunable coupler from its parked bias (large tilt,
small tunnel splitting) to its symmetry point, holds it there, and parks it
again.  While the coupler is at the symmetry point each data qubit's
splitting depends on the other qubit's state, so the pair accumulates a
conditional (ZZ) phase at a fixed rate; the hold time sets the phase.

Two calibrations live here:

* :func:`calibrate_conditional_phase` works in the three-body picture (two
  qubits plus coupler, resonators dropped) with linear bias ramps at a given
  slew rate.  It is cheap and transparent, and it exposes how much phase the
  ramps themselves contribute, but it misses the resonators' dressing of the
  conditional-shift rate (about 6% here).
* :func:`calibrate_window_hold` is the production calibration: windows with
  C2-smooth ramps, measured on the full model, solving the hold for a target
  conditional phase.  Compiled gates use these numbers.

Smooth ramps matter.  The parked and active coupler biases differ by far
more than the coupler-qubit coupling, so the sweep is fast only on the scale
of the coupler's own splitting; a linear ramp's slope discontinuities excite
it badly (several percent leakage per window), while a smootherstep ramp of
a few ns leaves less than 1e-7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .. import model
from ..model import SystemParams
from ..propagate import PropagationSettings
from ..schedule import ControlSchedule, Segment, Waveform
from . import logical, ramps

# Canonical biases (eps, delta) in GHz.  The coupler parks at a large tilt
# where its ground state is magnetically inert, and activates at its
# symmetry point where it mediates the qubit-qubit interaction.
COUPLER_OFF = (17.0, 0.2)
COUPLER_ON = (0.0, 4.0)
OPERATING_DELTA = (5.0, 6.0)
STORAGE_DELTA = 14.0

# Smooth-ramp duration (ns) used by compiled gates: long enough that the
# measured per-window leakage sits near 1e-7, well under the error budget.
DEFAULT_WINDOW_RAMP = 3.5

# Default coupler slew rate (GHz/ns on the tilt axis) for the three-body
# calibration: full swing in half a nanosecond.
DEFAULT_RAMP_SLOPE = 34.0

_CAL_SETTINGS = PropagationSettings(rtol=1e-9)
_BLOCK_STEP = 1e-3  # ns, integrator step for the 8-dim linear-ramp picture


# ---------------------------------------------------------------------------
# Window construction (full model)
# ---------------------------------------------------------------------------


def window_duration(ramp_duration: float, hold: float) -> float:
    return 2.0 * ramp_duration + hold


def window_bias_segments(
    t0: float,
    ramp_duration: float,
    hold: float,
    off: tuple[float, float] = COUPLER_OFF,
    on: tuple[float, float] = COUPLER_ON,
) -> tuple[list[Segment], list[Segment]]:
    """Coupler (eps, delta) segments for one off->on->off window at t0."""
    if ramp_duration <= 0:
        raise ValueError("ramp duration must be positive")
    if hold < 0:
        raise ValueError("hold must be non-negative")
    times, shape = ramps.window_profile(ramp_duration)
    eps_segs, delta_segs = [], []

    def ramp_pair(start: float, frm: tuple[float, float], to: tuple[float, float]):
        eps_segs.append(
            ramps.tabulated_segment(start, times, frm[0] + (to[0] - frm[0]) * shape)
        )
        delta_segs.append(
            ramps.tabulated_segment(start, times, frm[1] + (to[1] - frm[1]) * shape)
        )

    ramp_pair(t0, off, on)
    if hold > 0:
        a, b = t0 + ramp_duration, t0 + ramp_duration + hold
        eps_segs.append(Segment(a, b, "constant", on[0], on[0]))
        delta_segs.append(Segment(a, b, "constant", on[1], on[1]))
    ramp_pair(t0 + ramp_duration + hold, on, off)
    return eps_segs, delta_segs


def window_schedule(
    ramp_duration: float,
    hold: float,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    pad: float = 0.3,
) -> ControlSchedule:
    """A lone window with the data qubits idling at their degeneracy points."""
    total = 2.0 * pad + window_duration(ramp_duration, hold)
    eps_segs, delta_segs = window_bias_segments(pad, ramp_duration, hold)
    eps_c = [Segment(0.0, pad, "constant", COUPLER_OFF[0], COUPLER_OFF[0])]
    del_c = [Segment(0.0, pad, "constant", COUPLER_OFF[1], COUPLER_OFF[1])]
    eps_c += eps_segs
    del_c += delta_segs
    eps_c.append(Segment(total - pad, total, "constant", COUPLER_OFF[0], COUPLER_OFF[0]))
    del_c.append(Segment(total - pad, total, "constant", COUPLER_OFF[1], COUPLER_OFF[1]))
    waveforms = (
        Waveform.constant(0.0, total),
        Waveform.constant(delta_op[0], total),
        Waveform.constant(0.0, total),
        Waveform.constant(delta_op[1], total),
        Waveform(tuple(eps_c)),
        Waveform(tuple(del_c)),
    )
    return ControlSchedule(waveforms)


@dataclass(frozen=True)
class WindowMeasurement:
    """Logical action of a lone window."""

    phase: float  # conditional phase (rad)
    leakage: float  # worst-case population lost from the logical space
    v: np.ndarray  # 4x4 logical matrix


def measure_window(
    params: SystemParams,
    ramp_duration: float,
    hold: float,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    settings: PropagationSettings = _CAL_SETTINGS,
) -> WindowMeasurement:
    sched = window_schedule(ramp_duration, hold, delta_op)
    v = logical.logical_unitary(params, sched, settings)
    leakage = max(
        max(0.0, 1.0 - float(np.sum(np.abs(v[:, k]) ** 2))) for k in range(4)
    )
    return WindowMeasurement(logical.conditional_phase(v), leakage, v)


@dataclass(frozen=True)
class WindowCalibration:
    """Smooth window delivering a target conditional phase."""

    ramp_duration: float
    hold: float
    phase: float  # achieved conditional phase (rad)
    rate: float  # d(phase)/d(hold) at the active bias (rad/ns)
    leakage: float

    @property
    def duration(self) -> float:
        return window_duration(self.ramp_duration, self.hold)


def calibrate_window_hold(
    params: SystemParams,
    ramp_duration: float = DEFAULT_WINDOW_RAMP,
    target: float = math.pi / 2,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    settings: PropagationSettings = _CAL_SETTINGS,
    tol: float = 1e-8,
) -> WindowCalibration:
    """Solve the hold so one window imparts conditional phase ``target``.

    The phase is affine in the hold (rate = 2*pi times the dressed
    conditional shift at the active bias), so two measurements pin the line
    and one or two Newton corrections land within ``tol``.
    """
    h0, h1 = 1.0, 3.0
    m0 = measure_window(params, ramp_duration, h0, delta_op, settings)
    m1 = measure_window(params, ramp_duration, h1, delta_op, settings)
    rate = (m1.phase - m0.phase) / (h1 - h0)
    if abs(rate) < 1e-6:
        raise ValueError("conditional-phase rate vanished; check the biases")
    goal = math.copysign(abs(target), rate)
    hold = h0 + (goal - m0.phase) / rate
    last = m0
    for _ in range(6):
        if hold < 0:
            raise ValueError(
                f"target phase {target:+.6f} rad needs a negative hold; "
                "the ramps alone overshoot it"
            )
        last = measure_window(params, ramp_duration, hold, delta_op, settings)
        err = goal - last.phase
        if abs(err) <= tol:
            break
        hold += err / rate
    else:
        raise RuntimeError("window hold calibration did not converge")
    return WindowCalibration(ramp_duration, hold, last.phase, rate, last.leakage)


# ---------------------------------------------------------------------------
# Three-body picture: linear ramps on the qubits+coupler block
# ---------------------------------------------------------------------------


def _block_labels(
    params: SystemParams, delta_op: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and labeled computational eigenvectors at the parked bias.

    Returns (energies[4], vectors[8, 4]) ordered by logical index
    b1 + 2*b2, coupler in its local ground state.
    """
    from ..decay import instantaneous_eigenbasis

    h_off = model.qubit_coupler_block(
        params, (0.0, 0.0, COUPLER_OFF[0]), (*delta_op, COUPLER_OFF[1])
    )
    vals, vecs = np.linalg.eigh(h_off)
    coupler = instantaneous_eigenbasis(*COUPLER_OFF)[:, 0]
    q = [instantaneous_eigenbasis(0.0, d) for d in delta_op]
    energies = np.empty(4)
    vectors = np.empty((8, 4), dtype=complex)
    used: set[int] = set()
    for b2 in (0, 1):
        for b1 in (0, 1):
            label = np.kron(coupler, np.kron(q[1][:, b2], q[0][:, b1]))
            overlaps = np.abs(label.conj() @ vecs) ** 2
            order = np.argsort(overlaps)[::-1]
            k = next(int(i) for i in order if int(i) not in used)
            if overlaps[k] < 0.5:
                raise RuntimeError("parked-bias eigenstates lost their labels")
            used.add(k)
            vec = vecs[:, k]
            ph = label.conj() @ vec
            vectors[:, b1 + 2 * b2] = vec * (ph.conj() / abs(ph))
            energies[b1 + 2 * b2] = vals[k]
    return energies, vectors


def _linear_ramp_propagator(
    h_from: np.ndarray, h_to: np.ndarray, duration: float, step: float = _BLOCK_STEP
) -> np.ndarray:
    """Fourth-order propagator for H(t) interpolating linearly in time."""
    if duration <= 0:
        return np.eye(h_from.shape[0], dtype=complex)
    a_mat = h_from
    b_mat = (h_to - h_from) / duration
    n = max(1, math.ceil(duration / step))
    edges = np.linspace(0.0, duration, n + 1)
    u = np.eye(h_from.shape[0], dtype=complex)
    for p, q in zip(edges[:-1], edges[1:]):
        h = q - p
        mid = 0.5 * (p + q)
        base = h * (a_mat + mid * b_mat)
        shear = (h * h / 6.0) * b_mat
        early = 0.5 * base - shear
        late = 0.5 * base + shear
        u = expm(-2j * math.pi * late) @ expm(-2j * math.pi * early) @ u
    return u


def _block_ramp_accumulated_phase(
    params: SystemParams,
    ramp_slope: float,
    delta_op: tuple[float, float],
) -> tuple[float, float]:
    """Unwrapped conditional phase of the two ramps alone (hold = 0).

    Tracks the labeled eigenstates adiabatically through both ramps and
    unwraps the conditional phase between checkpoints, so slow ramps that
    accumulate more than 2*pi are reported faithfully.  Also returns the
    integral of the instantaneous conditional-shift magnitude (times 2*pi),
    an upper bound on how much phase the ramps can possibly accumulate;
    far-beyond-bound results signal an unwrapping glitch (violent ramps
    scramble the adiabatic labels) and the caller falls back to the wrapped
    end-to-end phase.
    """
    ramp_duration = abs(COUPLER_ON[0] - COUPLER_OFF[0]) / ramp_slope
    if ramp_duration <= 0:
        return 0.0, 0.0
    h_off = model.qubit_coupler_block(
        params, (0.0, 0.0, COUPLER_OFF[0]), (*delta_op, COUPLER_OFF[1])
    )
    h_on = model.qubit_coupler_block(
        params, (0.0, 0.0, COUPLER_ON[0]), (*delta_op, COUPLER_ON[1])
    )
    _, start_vectors = _block_labels(params, delta_op)
    tracked = start_vectors.copy()
    u = np.eye(8, dtype=complex)
    combo_prev = 0.0
    unwrapped = 0.0
    bound = 0.0
    for h_a, h_b in ((h_off, h_on), (h_on, h_off)):
        n = max(4, math.ceil(ramp_duration / 0.25))
        lam = np.linspace(0.0, 1.0, n + 1)
        for la, lb in zip(lam[:-1], lam[1:]):
            h_p = h_a + la * (h_b - h_a)
            h_q = h_a + lb * (h_b - h_a)
            u = _linear_ramp_propagator(h_p, h_q, (lb - la) * ramp_duration) @ u
            vals, vecs = np.linalg.eigh(h_q)
            energies = np.empty(4)
            used: set[int] = set()
            for k in range(4):
                overlaps = np.abs(tracked[:, k].conj() @ vecs) ** 2
                order = np.argsort(overlaps)[::-1]
                idx = next(int(i) for i in order if int(i) not in used)
                used.add(idx)
                vec = vecs[:, idx]
                ph = tracked[:, k].conj() @ vec
                tracked[:, k] = vec * (ph.conj() / abs(ph))
                energies[k] = vals[idx]
            angles = [
                float(np.angle(tracked[:, k].conj() @ u @ start_vectors[:, k]))
                for k in range(4)
            ]
            combo = angles[3] - angles[2] - angles[1] + angles[0]
            step = (combo - combo_prev + math.pi) % (2.0 * math.pi) - math.pi
            unwrapped += step
            combo_prev = combo
            zz = energies[3] - energies[2] - energies[1] + energies[0]
            bound += 2.0 * math.pi * abs(zz) * (lb - la) * ramp_duration
    return unwrapped, bound


def block_window_phase(
    params: SystemParams,
    ramp_slope: float = DEFAULT_RAMP_SLOPE,
    hold: float = 0.0,
    delta_op: tuple[float, float] = OPERATING_DELTA,
) -> float:
    """Conditional phase of one linear-ramp window in the three-body picture.

    The coupler sweeps linearly from the parked to the active bias at
    ``ramp_slope`` GHz/ns on the tilt axis (the splitting axis moves
    proportionally), holds, and sweeps back.  Returns the conditional phase
    accumulated by the four computational states.  ``ramp_slope=math.inf``
    gives instantaneous ramps (hold = 0 then returns exactly zero).
    """
    if ramp_slope <= 0:
        raise ValueError("ramp slope must be positive")
    ramp_duration = abs(COUPLER_ON[0] - COUPLER_OFF[0]) / ramp_slope
    h_off = model.qubit_coupler_block(
        params, (0.0, 0.0, COUPLER_OFF[0]), (*delta_op, COUPLER_OFF[1])
    )
    h_on = model.qubit_coupler_block(
        params, (0.0, 0.0, COUPLER_ON[0]), (*delta_op, COUPLER_ON[1])
    )
    u = _linear_ramp_propagator(h_off, h_on, ramp_duration)
    if hold > 0:
        vals, vecs = np.linalg.eigh(h_on)
        u = (vecs * np.exp(-2j * math.pi * hold * vals)) @ vecs.conj().T @ u
    u = _linear_ramp_propagator(h_on, h_off, ramp_duration) @ u
    _, vectors = _block_labels(params, delta_op)
    phases = [
        float(np.angle(vectors[:, k].conj() @ u @ vectors[:, k])) for k in range(4)
    ]
    return float(
        (phases[3] - phases[2] - phases[1] + phases[0] + math.pi) % (2 * math.pi)
        - math.pi
    )


def calibrate_conditional_phase(
    params: SystemParams,
    ramp_slope: float = DEFAULT_RAMP_SLOPE,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    target: float = math.pi / 4,
    tol: float = 1e-6,
) -> float:
    """Hold time (ns) for a linear-ramp window with conditional phase pi/4.

    Works in the three-body picture.  On trend the phase is affine in the
    hold (rate = 2*pi times the bare conditional shift), but linear ramps at
    the default slew excite the coupler transiently, so the measured phase
    oscillates about the trend at the coupler splitting as the leaked
    amplitude re-interferes on the return ramp.  The solve therefore
    brackets the crossing nearest the trend estimate and bisects it.

    Raises ValueError when the ramps alone already exceed the target, which
    would need a negative hold (the slew rate is too small).
    """
    if not 0 < abs(target) < math.pi:
        raise ValueError("target phase must lie in (0, pi)")
    goal = abs(target)
    rate = 2.0 * math.pi * abs(model.conditional_shift(params.j_c, COUPLER_ON[1]))
    ramp_phase, bound = _block_ramp_accumulated_phase(params, ramp_slope, delta_op)
    if abs(ramp_phase) > 1.3 * bound + 0.3:
        # Adiabatic tracking lost its labels (violently fast ramps); the
        # accumulated phase then surely fits in (-pi, pi], so the wrapped
        # end-to-end value is the truth.
        ramp_phase = block_window_phase(params, ramp_slope, 0.0, delta_op)
    if ramp_phase > goal:
        raise ValueError(
            "ramps alone exceed the target conditional phase; "
            "a non-negative hold cannot reach it (slew rate too small)"
        )

    def residual(hold: float) -> float:
        return block_window_phase(params, ramp_slope, hold, delta_op) - goal

    estimate = max(0.0, (goal - ramp_phase) / rate)
    bracket = None
    for half_span in (0.35, 0.9):
        lo = max(0.0, estimate - half_span)
        grid = np.arange(lo, estimate + half_span + 1e-9, 0.05)
        values = [residual(h) for h in grid]
        crossings = [
            (abs(0.5 * (grid[i] + grid[i + 1]) - estimate), grid[i], grid[i + 1])
            for i in range(len(grid) - 1)
            if values[i] == 0.0 or (values[i] < 0.0) != (values[i + 1] < 0.0)
        ]
        if crossings:
            _, a, b = min(crossings)
            bracket = (a, b)
            break
    if bracket is None:
        raise RuntimeError("conditional-phase calibration found no crossing")
    from scipy.optimize import brentq

    hold = float(brentq(residual, *bracket, xtol=1e-12, rtol=1e-15))
    if abs(residual(hold)) > tol:
        raise RuntimeError("conditional-phase calibration did not converge")
    return hold
