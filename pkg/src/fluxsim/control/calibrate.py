"""Calibration pipeline: pin every free parameter of the compiled gates.

Order of operations:

1. Dressed splittings at the operating points (the drive frames).
2. pi-pulse duration and carrier offset per qubit, refined on the full
   model (the isolated-qubit values seed a simplex search); then the pi/2
   duration at the same offset.
3. Transfer ramps: constant-adiabaticity splitting sweeps long enough to
   keep the measured transfer leakage below 1e-6.
4. Coupler window hold for a conditional phase of pi/2 per window.
5. Splitting-sensitivity exposures for the echo-balance solver.
6. Per-gate phase closure: axis offsets and transfer-out delays that cancel
   the deterministic single-qubit phases, plus a shared window-hold trim
   that cancels any residual two-qubit phase the local knobs cannot reach.

Everything here simulates the noise-free full model; results are plain
numbers, so a calibration can be cached and reloaded (see
``default_calibration``).
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq, minimize

from ..model import SystemParams
from ..propagate import PropagationSettings
from ..schedule import ControlSchedule, MicrowavePulse, Segment, Waveform
from . import ramps, twolevel
from .compile import (
    DEFAULT_AMPLITUDE,
    DEFAULT_EDGE,
    DEFAULT_GUARD,
    CalibrationSet,
    GateClosure,
    compile_gate,
    gate_key,
)
from .logical import logical_frame, logical_unitary, unitary_error
from .windows import (
    COUPLER_OFF,
    COUPLER_ON,
    DEFAULT_WINDOW_RAMP,
    OPERATING_DELTA,
    STORAGE_DELTA,
    calibrate_window_hold,
    window_duration,
)

_CAL_SETTINGS = PropagationSettings(rtol=1e-10)
_GATE_SETTINGS = PropagationSettings(rtol=1e-9)

_SQ2 = 1.0 / math.sqrt(2.0)
_H_SINGLE = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]])


# ---------------------------------------------------------------------------
# Ideal gate targets (logical index nu = q1 + 2*q2)
# ---------------------------------------------------------------------------


def gate_target(gate: str, theta: float | None = None) -> np.ndarray:
    """4x4 unitary each compiled gate aims for (qubit 2 controls CNOT)."""
    name = gate.lower()
    eye = np.eye(4, dtype=complex)
    if name in ("idle", "transfer_in", "transfer_out"):
        return eye
    if name == "h":
        return np.kron(np.eye(2), _H_SINGLE).astype(complex)
    if name == "cnot":
        return eye[:, [0, 1, 3, 2]]
    if name == "swap":
        return eye[:, [0, 2, 1, 3]]
    if name == "cphase":
        if theta is None:
            raise ValueError("CPhase needs an angle")
        out = eye.copy()
        out[3, 3] = np.exp(1j * theta)
        return out
    raise ValueError(f"unknown gate {gate!r}")


# ---------------------------------------------------------------------------
# Microwave pulse refinement on the full model
# ---------------------------------------------------------------------------


def _pulse_probe_schedule(
    qubit: int,
    duration: float,
    offset: float,
    frame_freq: float,
    amplitude: float,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    edge: float = DEFAULT_EDGE,
    pad: float = 0.15,
) -> ControlSchedule:
    total = duration + 2.0 * pad
    center = pad + 0.5 * duration
    pulse = MicrowavePulse(
        qubit=qubit,
        t0=pad,
        duration=duration,
        amp=amplitude,
        freq=frame_freq + offset,
        phase=(-2.0 * math.pi * (frame_freq + offset) * center) % (2.0 * math.pi),
        edge=edge,
    )
    waveforms = (
        Waveform.constant(0.0, total),
        Waveform.constant(delta_op[0], total),
        Waveform.constant(0.0, total),
        Waveform.constant(delta_op[1], total),
        Waveform.constant(COUPLER_OFF[0], total),
        Waveform.constant(COUPLER_OFF[1], total),
    )
    return ControlSchedule(waveforms, (pulse,))


def _transfer_weight(v: np.ndarray, qubit: int) -> float:
    """Mean squared flip amplitude of ``qubit`` over both spectator states."""
    pairs = ((1, 0), (3, 2)) if qubit == 0 else ((2, 0), (3, 1))
    acc = 0.0
    for hi, lo in pairs:
        acc += abs(v[hi, lo]) ** 2 + abs(v[lo, hi]) ** 2
    return acc / 4.0


def refine_pi_pulse(
    params: SystemParams,
    qubit: int,
    frame_freq: float,
    amplitude: float = DEFAULT_AMPLITUDE,
    seed: tuple[float, float] | None = None,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    settings: PropagationSettings = _CAL_SETTINGS,
) -> tuple[float, float, float]:
    """(duration, offset, infidelity) of a full-model population-inverting
    pulse, seeded from the isolated-qubit calibration."""
    if seed is None:
        two_level = twolevel.calibrate_pi_pulse(amplitude, delta_op[qubit])
        seed = (two_level.duration, two_level.offset)

    def cost(x: np.ndarray) -> float:
        duration, offset = float(x[0]), float(x[1])
        if duration <= 2.5 * DEFAULT_EDGE or not 0.0 <= offset <= 0.02:
            return 1.0
        sched = _pulse_probe_schedule(qubit, duration, offset, frame_freq, amplitude)
        v = logical_unitary(params, sched, settings)
        return 1.0 - _transfer_weight(v, qubit)

    result = minimize(
        cost,
        np.array(seed),
        method="Nelder-Mead",
        options={
            "xatol": 1e-9,
            "fatol": 1e-13,
            "initial_simplex": np.array(seed)
            + np.array([[0.0, 0.0], [0.02, 0.0], [0.0, 5e-4]]),
            "maxiter": 300,
        },
    )
    duration, offset = float(result.x[0]), float(result.x[1])
    infidelity = float(result.fun)
    # The floor is set by off-resonant leakage (the excited qubit has a
    # secondary transition to its resonator a few tens of MHz from the
    # drive), not by the optimizer; a few 1e-5 is expected at full drive.
    if infidelity > 1e-4:
        raise RuntimeError(
            f"pi-pulse refinement stalled at infidelity {infidelity:.2e}"
        )
    return duration, offset, infidelity


def refine_half_pulse(
    params: SystemParams,
    qubit: int,
    frame_freq: float,
    offset: float,
    pi_duration: float,
    amplitude: float = DEFAULT_AMPLITUDE,
    settings: PropagationSettings = _CAL_SETTINGS,
) -> float:
    """Duration of an equal-superposition pulse at the pi pulse's offset."""

    def imbalance(duration: float) -> float:
        sched = _pulse_probe_schedule(qubit, duration, offset, frame_freq, amplitude)
        v = logical_unitary(params, sched, settings)
        return _transfer_weight(v, qubit) - 0.5

    return float(
        brentq(imbalance, 0.35 * pi_duration, 0.75 * pi_duration, xtol=1e-10)
    )


# ---------------------------------------------------------------------------
# Transfer ramps
# ---------------------------------------------------------------------------


def _transfer_probe_schedule(
    params: SystemParams,
    tables: tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    pad: float = 0.1,
) -> ControlSchedule:
    """Both qubits sweep storage -> operating together (as compiled gates
    retrieve them); a lone sweep would drag one qubit through the other's
    parked splitting, a crossing no gate ever visits."""
    total = float(max(t[-1] for t, _ in tables)) + 2.0 * pad
    ramped = []
    for times, values in tables:
        segs = [
            Segment(0.0, pad, "constant", values[0], values[0]),
            ramps.tabulated_segment(pad, times, values),
        ]
        if pad + times[-1] < total - 1e-12:
            segs.append(
                Segment(pad + times[-1], total, "constant", values[-1], values[-1])
            )
        ramped.append(Waveform(tuple(segs)))
    waveforms = (
        Waveform.constant(0.0, total),
        ramped[0],
        Waveform.constant(0.0, total),
        ramped[1],
        Waveform.constant(COUPLER_OFF[0], total),
        Waveform.constant(COUPLER_OFF[1], total),
    )
    return ControlSchedule(waveforms)


def transfer_infidelity(
    params: SystemParams,
    tables: tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    settings: PropagationSettings = _GATE_SETTINGS,
) -> float:
    """Worst logical-subspace leakage of a simultaneous two-qubit retrieve."""
    sched = _transfer_probe_schedule(params, tables)
    v = logical_unitary(params, sched, settings)
    return float(max(0.0, np.max(1.0 - np.sum(np.abs(v) ** 2, axis=0))))


def _transfer_tables(
    params: SystemParams,
    duration: float,
    delta_op: tuple[float, float],
    delta_storage: float,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    return tuple(
        ramps.transfer_ramp_values(
            params.f_r[q], params.j_res, delta_storage, delta_op[q], duration
        )
        for q in (0, 1)
    )


def build_transfer_ramp(
    params: SystemParams,
    qubit: int,
    duration: float | None = None,
    infidelity_bound: float = 1e-6,
    delta_op: tuple[float, float] = OPERATING_DELTA,
    delta_storage: float = STORAGE_DELTA,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Constant-adiabaticity splitting sweep storage -> operating.

    Returns (times, values, measured infidelity).  With ``duration`` omitted
    the shortest ramp (on a 1.5x scan grid) meeting the bound is chosen;
    with it given, the measured infidelity must meet the bound.  Infidelity
    is measured with both qubits swept together, the configuration every
    compiled gate uses.
    """
    candidates = (
        [duration] if duration is not None else [4.0 * 1.5**k for k in range(8)]
    )
    last = math.inf
    for t_ramp in candidates:
        tables = _transfer_tables(params, t_ramp, delta_op, delta_storage)
        last = transfer_infidelity(params, tables)
        if last <= infidelity_bound:
            times, values = tables[qubit]
            return times, values, last
    raise ValueError(
        f"transfer of qubit {qubit + 1} misses infidelity {infidelity_bound:.1e} "
        f"at duration {candidates[-1]:.3g} ns (measured {last:.2e}); "
        "request a longer ramp"
    )


# ---------------------------------------------------------------------------
# Splitting-sensitivity exposures
# ---------------------------------------------------------------------------


def _sensitivity(
    params: SystemParams,
    qubit: int,
    delta: tuple[float, float],
    coupler: tuple[float, float] = COUPLER_OFF,
) -> float:
    frame = logical_frame(
        params, (0.0, 0.0, coupler[0]), (delta[0], delta[1], coupler[1])
    )
    return frame.delta_sensitivity(qubit)


def _transfer_exposure(
    params: SystemParams,
    qubit: int,
    times: np.ndarray,
    values: np.ndarray,
    delta_op: tuple[float, float],
    n: int = 151,
) -> float:
    """Integral of the splitting sensitivity along one transfer ramp.

    Bare labels lose meaning at the qubit-resonator avoided crossing, so
    the four logical eigenstates are followed adiabatically (greedy maximum
    overlap sample to sample) and the sensitivity comes from the tracked
    states directly.
    """
    from .. import hilbert, model

    op = 0.5 * model.SX[qubit]
    pick = np.linspace(0, len(times) - 1, n).round().astype(int)
    start = values[pick[0]]
    delta0 = (start, delta_op[1]) if qubit == 0 else (delta_op[0], start)
    tracked = logical_frame(
        params, (0.0, 0.0, COUPLER_OFF[0]), (delta0[0], delta0[1], COUPLER_OFF[1])
    ).vectors
    sens = []
    for v in values[pick]:
        delta = (v, delta_op[1]) if qubit == 0 else (delta_op[0], v)
        h = model.static_hamiltonian(
            params, (0.0, 0.0, COUPLER_OFF[0]), (delta[0], delta[1], COUPLER_OFF[1])
        )
        _, vectors = hilbert.eigh(h)
        overlaps = np.abs(tracked.conj().T @ vectors)
        used: set[int] = set()
        columns = []
        for row in overlaps:
            order = np.argsort(row)[::-1]
            best = next(int(k) for k in order if int(k) not in used)
            used.add(best)
            columns.append(vectors[:, best])
        tracked = np.column_stack(columns)
        excited = tracked[:, 1 << qubit]
        ground = tracked[:, 0]
        sens.append(
            float((excited.conj() @ op @ excited - ground.conj() @ op @ ground).real)
        )
    return float(np.trapezoid(sens, times[pick]))


def _window_ramp_exposure(
    params: SystemParams,
    qubit: int,
    ramp_duration: float,
    delta_op: tuple[float, float],
    n: int = 101,
) -> float:
    """Sensitivity integral over both coupler ramps of one window."""
    times, profile = ramps.window_profile(ramp_duration)
    pick = np.linspace(0, len(times) - 1, n).round().astype(int)
    sens = []
    for s in profile[pick]:
        coupler = (
            COUPLER_OFF[0] + s * (COUPLER_ON[0] - COUPLER_OFF[0]),
            COUPLER_OFF[1] + s * (COUPLER_ON[1] - COUPLER_OFF[1]),
        )
        sens.append(_sensitivity(params, qubit, delta_op, coupler))
    return 2.0 * float(np.trapezoid(sens, times[pick]))


# ---------------------------------------------------------------------------
# Phase extraction and closure
# ---------------------------------------------------------------------------

_HALF_BITS = np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]])


def local_phase_fit(v: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Fit V ~ exp(i*gamma) Z_post(b) T Z_pre(a) on the target's support.

    Z(theta) multiplies a qubit's basis states by exp(i*theta*(bit - 1/2)).
    Returns (a1, a2, b1, b2) as the minimum-norm least-squares solution over
    the support phases (directions the support cannot see stay zero).
    """
    k_idx, l_idx = np.nonzero(np.abs(target) > 1e-9)
    r = v[k_idx, l_idx] * np.conj(target[k_idx, l_idx])
    # Remove the dominant common phase before taking principal values so a
    # large global phase cannot wrap individual elements inconsistently.
    common = np.sum(r)
    if abs(common) > 1e-12:
        r = r * np.conj(common / abs(common))
    angles = np.angle(r)
    rows = np.column_stack(
        [np.ones_like(angles), _HALF_BITS[l_idx], _HALF_BITS[k_idx]]
    )
    fit, *_ = np.linalg.lstsq(rows, angles, rcond=None)
    return fit[1:]


def conditional_residual(v: np.ndarray, target: np.ndarray) -> float:
    """Two-qubit phase (rad) left after any local Z corrections.

    Combines four support elements so the global and all single-qubit
    phases cancel; what remains is the conditional phase still separating V
    from the target.
    """
    k_idx, l_idx = np.nonzero(np.abs(target) > 1e-9)
    r = v[k_idx, l_idx] * np.conj(target[k_idx, l_idx])
    signs = 4.0 * _HALF_BITS[k_idx, 0] * _HALF_BITS[k_idx, 1]
    combo = 0.0
    for phase, s in zip(np.angle(r), signs):
        combo += s * phase
    scale = 4.0 / len(signs)  # support has one element per row
    combo *= scale
    return float((combo + math.pi) % (2.0 * math.pi) - math.pi)


def solve_gate_closure(
    gate: str,
    params: SystemParams,
    cal: CalibrationSet,
    theta: float | None = None,
    tol: float = 5e-6,
    max_iter: int = 8,
    settings: PropagationSettings = _GATE_SETTINGS,
    echo: bool = True,
) -> GateClosure:
    """Find axis offsets, transfer-out delays, and (for gates with windows
    whose conditional phase the local knobs cannot absorb) a window-hold
    trim, minimizing the noise-free gate error."""
    name = gate.lower()
    target = gate_target(name, theta)
    if echo:
        trimmed = ("swap", "cphase")
        n_windows = {"swap": 6, "cphase": 2}.get(name, 0)
    else:
        # Without echoes every windowed gate needs the hold trim: nothing
        # else can absorb a conditional-phase residual.
        trimmed = ("cnot", "swap", "cphase")
        n_windows = {"cnot": 2, "swap": 3, "cphase": 1}.get(name, 0)
    uses_windows = name in trimmed and _has_windows(name, theta)

    def measure(closure: GateClosure) -> tuple[np.ndarray, np.ndarray, float]:
        sched = compile_gate(name, params, cal, theta=theta, closure=closure,
                             echo=echo)
        v = logical_unitary(params, sched, settings)
        return local_phase_fit(v, target), v, unitary_error(v, target)

    closure = GateClosure()
    probe = 0.02
    response: np.ndarray | None = None
    hold_slope: float | None = None
    best = (math.inf, closure)
    for iteration in range(max_iter):
        phases, v, err = measure(closure)
        if err < best[0]:
            best = (err, closure)
        if err <= tol:
            break
        if uses_windows:
            combo = conditional_residual(v, target)
            if abs(combo) > 0.5 * tol:
                hold = closure.window_hold
                hold = cal.window_hold if hold is None else hold
                if hold_slope is None:
                    # The echoes inside multi-window sequences cancel part
                    # of each window's conditional phase, so the nominal
                    # n_windows * rate sensitivity overshoots; measure it.
                    trial = 0.01
                    probed = measure(replace(closure, window_hold=hold + trial))
                    hold_slope = (
                        conditional_residual(probed[1], target) - combo
                    ) / trial
                    if abs(hold_slope) < 1e-3 * n_windows * cal.window_rate:
                        raise RuntimeError(
                            f"window hold has no conditional-phase response"
                            f" for {name}"
                        )
                closure = replace(closure, window_hold=hold - combo / hold_slope)
                continue
        if response is None:
            # Probe each knob separately: gates that exchange the qubits
            # route one drive's axis offset into the other qubit's output
            # phase, so no own-qubit structure can be assumed.
            base = phases
            knob_closures = (
                replace(closure, axis_offset=(closure.axis_offset[0] + probe,
                                              closure.axis_offset[1])),
                replace(closure, axis_offset=(closure.axis_offset[0],
                                              closure.axis_offset[1] + probe)),
                replace(closure, delay=(closure.delay[0] + probe,
                                        closure.delay[1])),
                replace(closure, delay=(closure.delay[0],
                                        closure.delay[1] + probe)),
            )
            response = np.zeros((4, 4))
            for j, probe_closure in enumerate(knob_closures):
                dphi = measure(probe_closure)[0] - base
                dphi = (dphi + math.pi) % (2.0 * math.pi) - math.pi
                response[:, j] = dphi / probe
        step, *_ = np.linalg.lstsq(response, -phases, rcond=None)
        axis = [
            ((closure.axis_offset[q] + step[q]) + math.pi) % (2.0 * math.pi)
            - math.pi
            for q in (0, 1)
        ]
        delay = []
        for q in (0, 1):
            raw = closure.delay[q] + step[2 + q]
            slope = response[2 + q, 2 + q]  # post-phase response to delay
            if abs(slope) > 1e-9:
                raw %= 2.0 * math.pi / abs(slope)
            delay.append(max(0.0, raw))
        closure = replace(
            closure, axis_offset=(axis[0], axis[1]), delay=(delay[0], delay[1])
        )
    else:
        phases, v, err = measure(closure)
        if err < best[0]:
            best = (err, closure)
    err, closure = best
    if err > tol:
        raise RuntimeError(
            f"phase closure for {name} stalled at error {err:.2e} (tol {tol:.1e})"
        )
    return replace(closure, error=err)


def _has_windows(name: str, theta: float | None) -> bool:
    if name != "cphase":
        return name in ("cnot", "swap")
    t = (theta or 0.0) % (2.0 * math.pi)
    return min(t, 2.0 * math.pi - t) >= 1e-12


# ---------------------------------------------------------------------------
# Idle-phase measurement
# ---------------------------------------------------------------------------


def calibrate_idle_phase(
    schedule: ControlSchedule,
    params: SystemParams,
    target: np.ndarray | None = None,
    settings: PropagationSettings = _GATE_SETTINGS,
) -> np.ndarray:
    """Per-qubit phase correction (rad) the store timing must add so the
    schedule's noise-free logical action matches its target up to a global
    phase.  The correction is the negated net single-qubit phase; it is
    applied by moving the transfer-out start times."""
    if target is None:
        target = np.eye(4, dtype=complex)
    v = logical_unitary(params, schedule, settings)
    a1, a2, b1, b2 = local_phase_fit(v, target)
    correction = -np.array([a1 + b1, a2 + b2])
    return (correction + math.pi) % (2.0 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

DEFAULT_CLOSURE_GATES: tuple[tuple[str, float | None], ...] = (
    ("idle", None),
    ("h", None),
    ("cnot", None),
    ("swap", None),
    ("cphase", math.pi / 2.0),
)


def calibrate(
    params: SystemParams,
    amplitude: float = DEFAULT_AMPLITUDE,
    gates: tuple[tuple[str, float | None], ...] = DEFAULT_CLOSURE_GATES,
    transfer_duration: float | None = None,
    closure_tol: float = 5e-6,
    delta_op: tuple[float, float] = OPERATING_DELTA,
) -> CalibrationSet:
    """Run the full noise-free calibration pipeline."""
    operating = logical_frame(
        params, (0.0, 0.0, COUPLER_OFF[0]), (delta_op[0], delta_op[1], COUPLER_OFF[1])
    )
    frame_freq = (operating.splitting(0), operating.splitting(1))

    pi_duration, pi2_duration, offsets = [], [], []
    for qubit in (0, 1):
        duration, offset, _ = refine_pi_pulse(
            params, qubit, frame_freq[qubit], amplitude
        )
        half = refine_half_pulse(
            params, qubit, frame_freq[qubit], offset, duration, amplitude
        )
        pi_duration.append(duration)
        pi2_duration.append(half)
        offsets.append(offset)

    first = build_transfer_ramp(params, 0, transfer_duration, delta_op=delta_op)
    second = build_transfer_ramp(params, 1, float(first[0][-1]), delta_op=delta_op)
    tables = [first, second]

    window = calibrate_window_hold(params, DEFAULT_WINDOW_RAMP, delta_op=delta_op)

    w_operating = tuple(_sensitivity(params, q, delta_op) for q in (0, 1))
    w_coupled = tuple(
        _sensitivity(params, q, delta_op, COUPLER_ON) for q in (0, 1)
    )
    storage = (STORAGE_DELTA, STORAGE_DELTA)
    w_storage = tuple(_sensitivity(params, q, storage) for q in (0, 1))
    kappa_transfer = tuple(
        _transfer_exposure(params, q, tables[q][0], tables[q][1], delta_op)
        for q in (0, 1)
    )
    kappa_window = tuple(
        _window_ramp_exposure(params, q, DEFAULT_WINDOW_RAMP, delta_op)
        for q in (0, 1)
    )

    cal = CalibrationSet(
        amplitude=amplitude,
        edge=DEFAULT_EDGE,
        guard=DEFAULT_GUARD,
        delta_op=delta_op,
        delta_storage=STORAGE_DELTA,
        pi_duration=tuple(pi_duration),
        pi2_duration=tuple(pi2_duration),
        bs_offset=tuple(offsets),
        drive_freq=tuple(frame_freq[q] + offsets[q] for q in (0, 1)),
        frame_freq=frame_freq,
        window_ramp=window.ramp_duration,
        window_hold=window.hold,
        window_rate=window.rate,
        window_leakage=window.leakage,
        transfer_duration=tuple(float(t[0][-1]) for t in tables),
        transfer_times=tuple(tuple(map(float, t[0])) for t in tables),
        transfer_values=tuple(tuple(map(float, t[1])) for t in tables),
        w_operating=w_operating,
        w_coupled=w_coupled,
        w_storage=w_storage,
        kappa_transfer=kappa_transfer,
        kappa_window=kappa_window,
    )

    closures = {}
    for gate, theta in gates:
        # Each simultaneous two-qubit pulse carries ~1e-3 of irreducible
        # double-excitation amplitude (the drives' two-photon sideband);
        # SWAP stacks the most of them, so its closure floor sits near
        # 1e-5 where the other gates reach 5e-6.
        tol = max(closure_tol, 1.5e-5) if gate == "swap" else closure_tol
        closure = solve_gate_closure(gate, params, cal, theta, tol=tol)
        closures[gate_key(gate, theta)] = closure
        if gate != "idle":
            closures[gate_key(gate, theta, echo=False)] = solve_gate_closure(
                gate, params, cal, theta, tol=tol, echo=False
            )
    cal = replace(cal, closures=closures)

    idle = compile_gate("idle", params, cal)
    idle_phase = calibrate_idle_phase(idle, params)
    eta_slope, eta_slope_free = _delay_slopes(params, cal)
    return replace(
        cal,
        idle_phase=tuple(map(float, idle_phase)),
        eta_slope=eta_slope,
        eta_slope_free=eta_slope_free,
    )


def _delay_slopes(
    params: SystemParams, cal: CalibrationSet, probe: float = 0.02
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Measured d(phase)/d(delay) for pulsed and pulse-less store timing."""
    eye = np.eye(4, dtype=complex)

    def phases(gate: str, closure: GateClosure) -> np.ndarray:
        sched = compile_gate(gate, params, cal, theta=0.0 if gate == "cphase" else None,
                             closure=closure)
        v = logical_unitary(params, sched, _GATE_SETTINGS)
        a1, a2, b1, b2 = local_phase_fit(v, eye)
        return np.array([a1 + b1, a2 + b2])

    slopes = []
    for gate in ("cphase", "idle"):
        base = phases(gate, GateClosure())
        moved = phases(gate, GateClosure(delay=(probe, probe)))
        diff = (moved - base + math.pi) % (2.0 * math.pi) - math.pi
        slopes.append(tuple(float(d / probe) for d in diff))
    return slopes[0], slopes[1]


# ---------------------------------------------------------------------------
# Cached default calibration
# ---------------------------------------------------------------------------

_DEFAULT_CACHE: CalibrationSet | None = None


def default_calibration() -> CalibrationSet:
    """Calibration shipped with the package for the default SystemParams."""
    global _DEFAULT_CACHE
    if _DEFAULT_CACHE is None:
        from .compile import calibration_from_dict
        import json

        text = (
            importlib.resources.files("fluxsim.control")
            .joinpath("default_calibration.json")
            .read_text()
        )
        _DEFAULT_CACHE = calibration_from_dict(json.loads(text))
    return _DEFAULT_CACHE
