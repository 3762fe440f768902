"""Gate compilation: pulse timelines, spin-echo placement, schedule emission.

A compiled gate is a :class:`~fluxsim.schedule.ControlSchedule` that

* retrieves both data qubits from storage to their operating points,
* plays fixed-amplitude microwave pulses and coupler windows,
* stores the qubits again,

with every free parameter pinned by a :class:`CalibrationSet`.

Echo placement.  Each qubit's splitting wanders with low-frequency noise on
its tunnel-splitting channel; pi pulses flip the sign with which that wander
accumulates.  For the stored coherence to survive, the signed exposure

    B_j(c) = integral_0^c  s_j(t) * w_j(t) dt

must vanish at every point where the qubit's phase becomes physical: the
center of each of its pi/2 pulses and the end of the operation.  Here s_j
flips at the qubit's pi-pulse centers and w_j is the splitting's sensitivity
to the tunnel-splitting bias (1 at the operating point, ~0 in storage, a
fixed profile across transfers and windows).  Gate layout therefore solves a
small linear program: minimize the total idle time subject to all balance
equations and a guard gap between consecutive elements.

Deterministic phases.  Single-qubit phases are closed per gate with two
knobs: a common offset on all of a qubit's pulse phases (a pure frame
rotation, which tunes the difference of the pre- and post-gate phases) and
a delay of the qubit's transfer-out start, which tunes the post-gate phase
at the beat between the operating and stored splittings.  The delay is
periodic in that beat (~0.23 ns), so it never exceeds a quarter nanosecond;
the echo exposure it adds at the end checkpoint (sensitivity times delay)
is orders of magnitude below every error budget here.  Any knob that kept
the balance exact would be phase-neutral as well: deterministic phase and
noise exposure accumulate with the same echo sign pattern, so only the
store timing, where the two profiles differ, can move one without the
other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..model import SystemParams
from ..schedule import ControlSchedule, Event, MicrowavePulse, Segment, Waveform
from . import ramps
from .windows import (
    COUPLER_OFF,
    COUPLER_ON,
    DEFAULT_WINDOW_RAMP,
    OPERATING_DELTA,
    STORAGE_DELTA,
    window_bias_segments,
    window_duration,
)

# Microwave drive settings (GHz, ns).  Scanned amplitude over 0.40-0.55 and
# envelope edge over 0.1-0.2: at 0.40 with 0.2 ns raised-cosine edges every
# refined pi and pi/2 pulse keeps its off-resonant leakage below 2.3e-7,
# versus a few 1e-6 for sharper edges or stronger drives, while total pulse
# time stays under 3 ns -- negligible next to the transfer ramps.
DEFAULT_AMPLITUDE = 0.40
DEFAULT_EDGE = 0.2
DEFAULT_GUARD = 0.1

GATES = ("h", "cnot", "swap", "cphase", "idle", "transfer_in", "transfer_out")

# Phases (rad) of the pi/2 pulses, in time order, relative to the final
# pulse's axis.  The values close the sequences exactly given the sign of
# the conditional phase each window imparts (verified by measurement:
# the opposite relative handedness lands a bit-flipped variant that no
# deterministic Z correction can absorb).
CNOT_PI2_AXES = (math.pi / 2.0, 0.0)
SWAP_PI2_AXES = (0.0, -math.pi / 2.0, 0.0)

_MIN_WINDOW_HOLD = 0.05


# ---------------------------------------------------------------------------
# Calibration container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateClosure:
    """Per-gate deterministic-phase solution."""

    axis_offset: tuple[float, float] = (0.0, 0.0)  # rad, added to pulse phases
    delay: tuple[float, float] = (0.0, 0.0)  # ns, transfer-out delay knob
    window_hold: float | None = None  # per-gate hold override (ns)
    error: float = math.nan  # achieved noise-free gate error


@dataclass(frozen=True)
class CalibrationSet:
    """Everything a compiled gate needs, as plain numbers.

    Pulse durations and carrier offsets are tuned on the full model (the
    dressed qubit is not exactly two-level); the window hold delivers a
    conditional phase of pi/2 per window; transfer tables hold the
    storage->operating splitting sweeps.  The w_* and kappa_* fields are
    splitting-sensitivity exposures used by the echo-balance solver.
    """

    amplitude: float = DEFAULT_AMPLITUDE
    edge: float = DEFAULT_EDGE
    guard: float = DEFAULT_GUARD
    delta_op: tuple[float, float] = OPERATING_DELTA
    delta_storage: float = STORAGE_DELTA
    # microwave pulses (per qubit)
    pi_duration: tuple[float, float] = (0.0, 0.0)
    pi2_duration: tuple[float, float] = (0.0, 0.0)
    bs_offset: tuple[float, float] = (0.0, 0.0)  # carrier offset above frame
    drive_freq: tuple[float, float] = (0.0, 0.0)  # carrier (GHz)
    frame_freq: tuple[float, float] = (0.0, 0.0)  # dressed splittings (GHz)
    # coupler windows
    window_ramp: float = DEFAULT_WINDOW_RAMP
    window_hold: float = 0.0
    window_rate: float = 0.0  # d(conditional phase)/d(hold), rad/ns
    window_leakage: float = 0.0
    # transfers (per qubit; values run storage -> operating)
    transfer_duration: tuple[float, float] = (0.0, 0.0)
    transfer_times: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    transfer_values: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    # echo-balance exposures (per qubit)
    w_operating: tuple[float, float] = (1.0, 1.0)
    w_coupled: tuple[float, float] = (1.0, 1.0)  # sensitivity with coupler on
    w_storage: tuple[float, float] = (0.0, 0.0)
    kappa_transfer: tuple[float, float] = (0.0, 0.0)  # integral of w over a ramp
    kappa_window: tuple[float, float] = (0.0, 0.0)  # integral over window ramps
    # phase response of the transfer-out delay knob (rad/ns)
    eta_slope: tuple[float, float] = (0.0, 0.0)  # qubits that play pi pulses
    eta_slope_free: tuple[float, float] = (0.0, 0.0)  # pulse-less qubits
    # residual per-qubit phase of the bare retrieve/store cycle (rad)
    idle_phase: tuple[float, float] = (0.0, 0.0)
    closures: dict[str, GateClosure] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("amplitude", "edge", "guard"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite")
        for name in ("pi_duration", "pi2_duration", "transfer_duration"):
            if any(not math.isfinite(v) or v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be finite and non-negative")
        if not math.isfinite(self.window_hold) or self.window_hold < 0:
            raise ValueError("window hold must be finite and non-negative")

    def pulse_duration(self, qubit: int, angle: str) -> float:
        table = self.pi_duration if angle == "pi" else self.pi2_duration
        value = table[qubit]
        if value <= 0:
            raise ValueError("calibration missing: pulse durations not set")
        return value

    def transfer_table(self, qubit: int) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(self.transfer_times[qubit], dtype=float)
        values = np.asarray(self.transfer_values[qubit], dtype=float)
        if times.size < 2:
            raise ValueError("calibration missing: transfer tables not set")
        return times, values


def gate_key(gate: str, theta: float | None = None, echo: bool = True) -> str:
    name = gate.lower()
    if name == "cphase":
        if theta is None:
            raise ValueError("CPhase needs an angle")
        name = f"cphase:{theta:.12g}"
    if not echo and name not in ("idle", "transfer_in", "transfer_out"):
        name += ":noecho"
    return name


# ---------------------------------------------------------------------------
# Serialization (plain JSON; used by the command-line cache)
# ---------------------------------------------------------------------------


def calibration_to_dict(cal: CalibrationSet) -> dict:
    out = {}
    for name in CalibrationSet.__dataclass_fields__:
        value = getattr(cal, name)
        if name == "closures":
            value = {
                key: {
                    "axis_offset": list(c.axis_offset),
                    "delay": list(c.delay),
                    "window_hold": c.window_hold,
                    "error": c.error,
                }
                for key, c in value.items()
            }
        elif isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[name] = value
    return out


def calibration_from_dict(data: dict) -> CalibrationSet:
    kwargs = {}
    for name, spec in CalibrationSet.__dataclass_fields__.items():
        if name not in data:
            continue
        value = data[name]
        if name == "closures":
            value = {
                key: GateClosure(
                    axis_offset=tuple(c["axis_offset"]),
                    delay=tuple(c["delay"]),
                    window_hold=c.get("window_hold"),
                    error=c.get("error", math.nan),
                )
                for key, c in value.items()
            }
        elif isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    return CalibrationSet(**kwargs)


def save_calibration(path, cal: CalibrationSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(calibration_to_dict(cal), fh, indent=1)


def load_calibration(path) -> CalibrationSet:
    with open(path, "r", encoding="utf-8") as fh:
        return calibration_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Gate element tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Pulse:
    qubits: tuple[int, ...]
    angle: str  # "pi" or "pi2"
    axis: float  # rad


@dataclass(frozen=True)
class _Window:
    hold: float  # ns


def _cphase_window_hold(
    theta: float, cal: CalibrationSet, n_windows: int = 2
) -> float | None:
    """Hold per window so ``n_windows`` equal windows give phase ``theta``.

    Each window contributes conditional phase c, so c needs only satisfy
    n*c = theta (mod 2*pi); any branch of that congruence is equally valid,
    and the freedom always yields a non-negative hold.  Returns None when
    theta is a multiple of 2*pi (no windows at all).
    """
    theta = theta % (2.0 * math.pi)
    if min(theta, 2.0 * math.pi - theta) < 1e-12:
        return None
    rate = cal.window_rate
    if rate <= 0:
        raise ValueError("calibration missing: window phase rate not set")
    period = 2.0 * math.pi / n_windows
    phase_floor = math.pi / 2.0 + rate * (_MIN_WINDOW_HOLD - cal.window_hold)
    combo = phase_floor + (theta / n_windows - phase_floor) % period
    return cal.window_hold + (combo - math.pi / 2.0) / rate


def _gate_elements(
    gate: str, theta: float | None, cal: CalibrationSet, hold: float,
    echo_on: bool = True,
) -> list:
    """Time-ordered pulse/window elements between the transfers.

    With ``echo_on`` false the refocusing pi pairs are dropped and each
    echoed two-window group collapses to a single window carrying the
    group's full conditional phase (pi for the calibrated pi/2-per-window
    hold), which preserves the ideal unitary while removing all the
    dephasing compensation.
    """
    echo = _Pulse((0, 1), "pi", 0.0)
    w = _Window(hold)
    if not echo_on:
        return _bare_gate_elements(gate, theta, cal, hold)
    if gate == "h":
        return [
            _Pulse((0,), "pi", 0.0),
            _Pulse((0,), "pi2", 0.0),
            _Pulse((0,), "pi", 0.0),
        ]
    if gate == "cnot":
        a1, a2 = CNOT_PI2_AXES
        return [
            echo, w, echo, w,
            _Pulse((0,), "pi2", a1),
            w, echo, w,
            _Pulse((0,), "pi2", a2),
            echo,
        ]
    if gate == "swap":
        a1, a2, a3 = SWAP_PI2_AXES
        return [
            echo, w, echo, w,
            _Pulse((0, 1), "pi2", a1),
            w, echo, w,
            _Pulse((0, 1), "pi2", a2),
            w, echo, w,
            _Pulse((0, 1), "pi2", a3),
            echo,
        ]
    if gate == "cphase":
        pair_hold = _cphase_window_hold(theta, cal)
        if pair_hold is None:
            return [echo, echo]
        # A per-gate hold override shifts the angle-derived hold by the same
        # trim it applies to the calibrated pi/2 hold.
        pair_hold += hold - cal.window_hold
        if pair_hold < 0.0:
            raise ValueError("window-hold trim drove a CPhase hold negative")
        wt = _Window(pair_hold)
        return [echo, wt, echo, wt]
    if gate == "idle":
        return []
    raise ValueError(f"unknown gate {gate!r}")


def _bare_gate_elements(
    gate: str, theta: float | None, cal: CalibrationSet, hold: float
) -> list:
    """Echo-free element tables: same ideal unitaries, no refocusing."""
    if gate in ("idle", "h"):
        return [] if gate == "idle" else [_Pulse((0,), "pi2", 0.0)]
    if cal.window_rate <= 0:
        raise ValueError("calibration missing: window phase rate not set")
    # One window stands in for an echoed two-window group, so it carries
    # twice the per-window conditional phase; the stored hold trim still
    # applies relative to the calibrated pi/2 hold.
    wide = _Window(hold + 0.5 * math.pi / cal.window_rate)
    if gate == "cnot":
        a1, a2 = CNOT_PI2_AXES
        return [wide, _Pulse((0,), "pi2", a1), wide, _Pulse((0,), "pi2", a2)]
    if gate == "swap":
        a1, a2, a3 = SWAP_PI2_AXES
        return [
            wide,
            _Pulse((0, 1), "pi2", a1),
            wide,
            _Pulse((0, 1), "pi2", a2),
            wide,
            _Pulse((0, 1), "pi2", a3),
        ]
    if gate == "cphase":
        lone_hold = _cphase_window_hold(theta, cal, n_windows=1)
        if lone_hold is None:
            return []
        lone_hold += hold - cal.window_hold
        if lone_hold < 0.0:
            raise ValueError("window-hold trim drove a CPhase hold negative")
        return [_Window(lone_hold)]
    raise ValueError(f"unknown gate {gate!r}")


def _slot_duration(element, cal: CalibrationSet) -> float:
    if isinstance(element, _Pulse):
        return max(cal.pulse_duration(q, element.angle) for q in element.qubits)
    return window_duration(cal.window_ramp, element.hold)


# ---------------------------------------------------------------------------
# Timeline layout and echo balance
# ---------------------------------------------------------------------------


@dataclass
class _Layout:
    """Resolved absolute times for one compiled gate."""

    elements: list
    starts: list[float]  # per mid element
    xin_end: float
    xout_start: tuple[float, float]
    total: float
    pulse_centers: dict  # (element index, qubit) -> center time
    flips: tuple[list[float], list[float]]
    half_checkpoints: tuple[list[float], list[float]]  # pi/2 centers
    active: tuple[int, ...] = (0, 1)
    lead: tuple[float, float] = (0.0, 0.0)  # per-qubit early retrieve


def _active_qubits(gate: str) -> tuple[int, ...]:
    """Qubits whose states are retrieved for this gate.

    Single-qubit gates only pull their own qubit out of storage; the other
    qubit's state rides out the operation in its resonator.
    """
    return (0,) if gate == "h" else (0, 1)


# Extra room reserved before the first element when the retrieve times may
# split per qubit (see _lead_allowance); generous next to the <0.2 ns splits
# the balance solver actually uses.
_LEAD_ALLOWANCE = 1.0


def _lead_allowance(elements: list) -> float:
    """Per-qubit retrieve-lead budget for this element sequence.

    When both qubits take pi/2 checkpoints from the same simultaneous pulse,
    their balance equations constrain the shared gaps proportionally but with
    different fixed exposures (transfer and window lumps differ per qubit), so
    no common timeline satisfies both. Letting each qubit finish its retrieve
    slightly early adds the one per-qubit knob that acts before the first
    flip. Single-qubit checkpoints never need it.
    """
    needs = any(
        isinstance(e, _Pulse) and e.angle == "pi2" and len(e.qubits) == 2
        for e in elements
    )
    return _LEAD_ALLOWANCE if needs else 0.0


def _resolve_layout(
    elements: list,
    cal: CalibrationSet,
    gaps: np.ndarray,
    dwell: np.ndarray,
    eta: tuple[float, float] = (0.0, 0.0),
    active: tuple[int, ...] = (0, 1),
    lead: tuple[float, float] = (0.0, 0.0),
    allowance: float = 0.0,
) -> _Layout:
    xin_end = max(cal.transfer_duration[q] for q in active) + allowance
    t = xin_end
    starts: list[float] = []
    for gap, element in zip(gaps, elements):
        t += gap
        starts.append(t)
        t += _slot_duration(element, cal)
    mid_end = t

    centers: dict = {}
    flips: tuple[list[float], list[float]] = ([], [])
    halves: tuple[list[float], list[float]] = ([], [])
    for i, element in enumerate(elements):
        if not isinstance(element, _Pulse):
            continue
        center = starts[i] + 0.5 * _slot_duration(element, cal)
        for q in element.qubits:
            centers[(i, q)] = center
            if element.angle == "pi":
                flips[q].append(center)
            else:
                halves[q].append(center)

    xout = [mid_end + dwell[q] + eta[q] for q in (0, 1)]
    total = max(xout[q] + cal.transfer_duration[q] for q in active)
    return _Layout(
        elements=elements,
        starts=starts,
        xin_end=xin_end,
        xout_start=(xout[0], xout[1]),
        total=total,
        pulse_centers=centers,
        flips=(sorted(flips[0]), sorted(flips[1])),
        half_checkpoints=(halves[0], halves[1]),
        active=active,
        lead=(lead[0], lead[1]),
    )


def _balance_values(layout: _Layout, cal: CalibrationSet, qubit: int) -> list[float]:
    """Signed exposure at each of the qubit's checkpoints (pi/2s, then end).

    Exposure spans are constant-sensitivity pieces except transfers and
    windows, which contribute lump integrals; flips and checkpoints never
    fall inside a lump span.
    """
    q = qubit
    if q not in layout.active:
        return []
    w_op = cal.w_operating[q]
    w_st = cal.w_storage[q]
    spans: list[tuple[float, float, float, float | None]] = []  # a, b, w, lump
    ramp_end = layout.xin_end - layout.lead[q]
    ramp_start = ramp_end - cal.transfer_duration[q]
    spans.append((0.0, ramp_start, w_st, None))
    spans.append((ramp_start, ramp_end, 0.0, cal.kappa_transfer[q]))
    cursor = ramp_end
    for i, element in enumerate(layout.elements):
        a = layout.starts[i]
        b = a + _slot_duration(element, cal)
        spans.append((cursor, a, w_op, None))  # gap
        if isinstance(element, _Window):
            lump = cal.kappa_window[q] + cal.w_coupled[q] * element.hold
            spans.append((a, b, 0.0, lump))
        else:
            spans.append((a, b, w_op, None))
        cursor = b
    out = layout.xout_start[q]
    spans.append((cursor, out, w_op, None))
    spans.append((out, out + cal.transfer_duration[q], 0.0, cal.kappa_transfer[q]))
    spans.append((out + cal.transfer_duration[q], layout.total, w_st, None))

    if not layout.flips[q]:
        return []
    marks = sorted(
        [(t, "flip") for t in layout.flips[q]]
        + [(t, "checkpoint") for t in layout.half_checkpoints[q]]
    )
    sign = 1.0
    acc = 0.0
    values: list[float] = []
    k = 0
    for a, b, w, lump in spans:
        if b <= a + 1e-15 and lump is None:
            continue
        if lump is not None:
            while k < len(marks) and marks[k][0] <= a + 1e-12:
                t, kind = marks[k]
                if kind == "flip":
                    sign = -sign
                else:
                    values.append(acc)
                k += 1
            if k < len(marks) and marks[k][0] < b - 1e-12:
                raise RuntimeError("echo marker inside a transfer or window")
            acc += sign * lump
            continue
        t = a
        while k < len(marks) and marks[k][0] <= b + 1e-12:
            mt, kind = marks[k]
            mt = min(max(mt, a), b)
            acc += sign * w * (mt - t)
            t = mt
            if kind == "flip":
                sign = -sign
            else:
                values.append(acc)
            k += 1
        acc += sign * w * (b - t)
    values.append(acc)  # end of operation
    return values


def _solve_gaps(
    elements: list, cal: CalibrationSet, active: tuple[int, ...] = (0, 1)
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimal gaps, transfer-out dwells, and retrieve leads satisfying every
    echo balance. All three knob families enter the balances affinely, so two
    probe evaluations per variable pin the exact equality system."""
    n_gaps = len(elements)
    n = n_gaps + 4
    allowance = _lead_allowance(elements)

    def residuals(x: np.ndarray) -> np.ndarray:
        layout = _resolve_layout(
            elements, cal, x[:n_gaps], x[n_gaps : n_gaps + 2],
            active=active, lead=x[n_gaps + 2 :], allowance=allowance,
        )
        chunks = [_balance_values(layout, cal, q) for q in active]
        return np.concatenate([np.asarray(c) for c in chunks]) if chunks else np.array([])

    x0 = np.full(n, cal.guard)
    x0[n_gaps + 2 :] = 0.0
    r0 = residuals(x0)
    if r0.size == 0:
        return x0[:n_gaps], x0[n_gaps : n_gaps + 2], x0[n_gaps + 2 :]
    columns = []
    for i in range(n):
        xi = x0.copy()
        xi[i] += 1.0
        columns.append(residuals(xi) - r0)
    a_eq = np.column_stack(columns)
    b_eq = a_eq @ x0 - r0
    result = linprog(
        c=np.ones(n),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=[(cal.guard, None)] * (n_gaps + 2) + [(0.0, allowance)] * 2,
        method="highs",
    )
    if not result.success:
        raise RuntimeError(f"echo balance has no feasible layout: {result.message}")
    x = np.asarray(result.x)
    check = residuals(x)
    if np.max(np.abs(check)) > 1e-9:
        raise RuntimeError("echo balance residual after layout solve")
    return x[:n_gaps], x[n_gaps : n_gaps + 2], x[n_gaps + 2 :]


# ---------------------------------------------------------------------------
# Schedule emission
# ---------------------------------------------------------------------------


def _delta_waveform(
    cal: CalibrationSet,
    qubit: int,
    total: float,
    retrieve_end: float | None,
    store_start: float | None,
) -> Waveform:
    q = qubit
    segs: list[Segment] = []
    times, values = (None, None)
    if retrieve_end is not None or store_start is not None:
        times, values = cal.transfer_table(q)
    cursor = 0.0
    # Starts at the operating point only when the schedule opens mid-flight
    # with a store ramp; otherwise the qubit begins (and, if never moved,
    # stays) parked at storage.
    if retrieve_end is None and store_start is not None:
        level = cal.delta_op[q]
    else:
        level = cal.delta_storage
    if retrieve_end is not None:
        ramp_start = retrieve_end - cal.transfer_duration[q]
        if ramp_start > 1e-12:
            segs.append(Segment(0.0, ramp_start, "constant", level, level))
        segs.append(ramps.tabulated_segment(ramp_start, times, values))
        cursor = retrieve_end
        level = cal.delta_op[q]
    if store_start is not None:
        if store_start > cursor + 1e-12:
            segs.append(Segment(cursor, store_start, "constant", level, level))
        segs.append(ramps.tabulated_segment(store_start, times, values[::-1]))
        cursor = store_start + cal.transfer_duration[q]
        level = cal.delta_storage
    if total > cursor + 1e-12 or not segs:
        segs.append(Segment(cursor, total, "constant", level, level))
    return Waveform(tuple(segs))


def _coupler_waveforms(
    cal: CalibrationSet, windows: list[tuple[float, float]], total: float
) -> tuple[Waveform, Waveform]:
    eps_segs: list[Segment] = []
    del_segs: list[Segment] = []
    cursor = 0.0
    for start, hold in windows:
        if start > cursor + 1e-12:
            eps_segs.append(
                Segment(cursor, start, "constant", COUPLER_OFF[0], COUPLER_OFF[0])
            )
            del_segs.append(
                Segment(cursor, start, "constant", COUPLER_OFF[1], COUPLER_OFF[1])
            )
        e, d = window_bias_segments(start, cal.window_ramp, hold)
        eps_segs += e
        del_segs += d
        cursor = start + window_duration(cal.window_ramp, hold)
    eps_segs.append(Segment(cursor, total, "constant", COUPLER_OFF[0], COUPLER_OFF[0]))
    del_segs.append(Segment(cursor, total, "constant", COUPLER_OFF[1], COUPLER_OFF[1]))
    return Waveform(tuple(eps_segs)), Waveform(tuple(del_segs))


def _emit(
    cal: CalibrationSet,
    layout: _Layout,
    closure: GateClosure,
    retrieve: bool,
    store: bool,
) -> ControlSchedule:
    total = layout.total
    pulses: list[MicrowavePulse] = []
    events: list[Event] = []
    windows: list[tuple[float, float]] = []
    for i, element in enumerate(layout.elements):
        if isinstance(element, _Window):
            start = layout.starts[i]
            windows.append((start, element.hold))
            events.append(
                Event("window", start, start + _slot_duration(element, cal))
            )
            continue
        for q in element.qubits:
            duration = cal.pulse_duration(q, element.angle)
            center = layout.pulse_centers[(i, q)]
            phase = element.axis + closure.axis_offset[q]
            phase -= 2.0 * math.pi * cal.drive_freq[q] * center
            phase = phase % (2.0 * math.pi)
            pulses.append(
                MicrowavePulse(
                    qubit=q,
                    t0=center - 0.5 * duration,
                    duration=duration,
                    amp=cal.amplitude,
                    freq=cal.drive_freq[q],
                    phase=phase,
                    edge=cal.edge,
                )
            )
            events.append(
                Event(element.angle, center - 0.5 * duration, center + 0.5 * duration, q)
            )
    for q in (0, 1):
        moved = q in layout.active
        if retrieve and moved:
            ramp_end = layout.xin_end - layout.lead[q]
            events.append(
                Event("transfer_in", ramp_end - cal.transfer_duration[q], ramp_end, q)
            )
        if store and moved:
            events.append(
                Event(
                    "transfer_out",
                    layout.xout_start[q],
                    layout.xout_start[q] + cal.transfer_duration[q],
                    q,
                )
            )
        if layout.flips[q]:
            for t in layout.half_checkpoints[q] + [total]:
                events.append(Event("echo", t, t, q))

    waveforms = (
        Waveform.constant(0.0, total),
        _delta_waveform(
            cal, 0, total,
            layout.xin_end - layout.lead[0] if retrieve and 0 in layout.active else None,
            layout.xout_start[0] if store and 0 in layout.active else None,
        ),
        Waveform.constant(0.0, total),
        _delta_waveform(
            cal, 1, total,
            layout.xin_end - layout.lead[1] if retrieve and 1 in layout.active else None,
            layout.xout_start[1] if store and 1 in layout.active else None,
        ),
        *_coupler_waveforms(cal, windows, total),
    )
    events.sort(key=lambda e: (e.t0, e.kind, -1 if e.qubit is None else e.qubit))
    return ControlSchedule(waveforms, tuple(pulses), tuple(events))


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def _transfer_only(cal: CalibrationSet, direction: str) -> ControlSchedule:
    t_max = max(cal.transfer_duration)
    if direction == "in":
        total = t_max + cal.guard
        layout = _Layout(
            elements=[], starts=[], xin_end=t_max, xout_start=(total, total),
            total=total, pulse_centers={}, flips=([], []),
            half_checkpoints=([], []),
        )
        return _emit(cal, layout, GateClosure(), retrieve=True, store=False)
    starts = (cal.guard, cal.guard)
    total = cal.guard + t_max
    layout = _Layout(
        elements=[], starts=[], xin_end=0.0, xout_start=starts, total=total,
        pulse_centers={}, flips=([], []), half_checkpoints=([], []),
    )
    return _emit(cal, layout, GateClosure(), retrieve=False, store=True)


def compile_gate(
    gate: str,
    params: SystemParams,
    cal: CalibrationSet,
    theta: float | None = None,
    closure: GateClosure | None = None,
    echo: bool = True,
) -> ControlSchedule:
    """Build the full control schedule of one gate.

    ``closure`` overrides the stored per-gate phase solution (phases default
    to zero for uncalibrated gates); ``theta`` is the CPhase angle; ``echo``
    false compiles the refocusing-free variant of the same ideal unitary.
    """
    name = gate.lower()
    if name not in GATES:
        raise ValueError(f"unknown gate {gate!r}; choose from {GATES}")
    if name == "transfer_in":
        return _transfer_only(cal, "in")
    if name == "transfer_out":
        return _transfer_only(cal, "out")
    if closure is None:
        closure = cal.closures.get(gate_key(name, theta, echo), GateClosure())
    hold = closure.window_hold if closure.window_hold is not None else cal.window_hold
    active = _active_qubits(name)
    elements = _gate_elements(name, theta, cal, hold, echo_on=echo)
    gaps, dwell, lead = _solve_gaps(elements, cal, active)
    layout = _resolve_layout(
        elements, cal, gaps, dwell, closure.delay, active,
        lead=lead, allowance=_lead_allowance(elements),
    )
    return _emit(cal, layout, closure, retrieve=True, store=True)


def serialize_schedule(schedule: ControlSchedule, dt: float = 0.01) -> str:
    """Render a schedule as tabular text: one `time channel value` row per
    sample, bias channels in GHz plus the two drive waveforms."""
    names = ("eps1", "delta1", "eps2", "delta2", "epsC", "deltaC", "drive1", "drive2")
    n = max(2, int(math.ceil(schedule.duration / dt)) + 1)
    times = np.linspace(0.0, schedule.duration, n)
    lines = ["time\tchannel\tvalue"]
    for t in times:
        biases = schedule.channel_values(t)
        drives = schedule.drive_values(t)
        for name, value in zip(names, (*biases, *drives)):
            lines.append(f"{t:.6f}\t{name}\t{value:.9g}")
    return "\n".join(lines) + "\n"
