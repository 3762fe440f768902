"""Logical frames: dressed computational bases and measured gate unitaries.

The four logical states at a bias configuration are the dressed eigenstates
adiabatically connected to the bare two-excitation patterns, with the data
excitation living in the qubit when its splitting sits below the resonator
and in the resonator when parked above it.  Gate readout projects onto the
endpoint frame and unwinds the deterministic phase accumulated at the dressed
eigenfrequencies, so an ideal idle reads back as the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import hilbert, model
from ..decay import instantaneous_eigenbasis
from ..propagate import (
    DEFAULT_SETTINGS,
    PropagationSettings,
    SchedulePlan,
    interval_propagator,
)
from ..schedule import ControlSchedule

__all__ = [
    "LogicalFrame",
    "conditional_phase",
    "dressed_splitting",
    "logical_frame",
    "logical_unitary",
    "unitary_error",
]

# A logical state must overlap its bare label at least this much; anything
# lower means the configuration does not separate into labeled branches.
_MIN_OVERLAP_SQ = 0.5


@dataclass(frozen=True)
class LogicalFrame:
    """Dressed computational basis at one static bias configuration.

    ``vectors[:, nu]`` is the dressed state for logical index
    ``nu = b1 + 2*b2``; ``energies[nu]`` its eigenfrequency (GHz).
    """

    eps: tuple[float, float, float]
    delta: tuple[float, float, float]
    vectors: np.ndarray
    energies: np.ndarray

    def splitting(self, qubit: int) -> float:
        """Dressed excitation frequency of data branch ``qubit`` (GHz)."""
        if qubit not in (0, 1):
            raise ValueError("data qubits are 0 and 1")
        return float(self.energies[1 << qubit] - self.energies[0])

    def conditional_shift(self) -> float:
        """How much exciting one branch shifts the other's frequency (GHz)."""
        e = self.energies
        return float(e[3] - e[2] - e[1] + e[0])

    def delta_sensitivity(self, qubit: int) -> float:
        """d(splitting)/d(delta_qubit) of branch ``qubit`` (Hellmann-Feynman).

        This is the first-order sensitivity of the stored coherence's phase
        rate to a static offset on the qubit's tunnel-splitting channel; it
        is what spin echoes must cancel.
        """
        if qubit not in (0, 1):
            raise ValueError("data qubits are 0 and 1")
        op = 0.5 * model.SX[qubit]
        excited = self.vectors[:, 1 << qubit]
        ground = self.vectors[:, 0]
        return float(
            (excited.conj() @ op @ excited - ground.conj() @ op @ ground).real
        )


def _local_qubit_state(eps: float, delta: float, excited: bool) -> np.ndarray:
    basis = instantaneous_eigenbasis(eps, delta)
    return basis[:, 1 if excited else 0]


def _bare_label_state(
    params: model.SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
    b1: int,
    b2: int,
) -> np.ndarray:
    """Product state for logical pattern (b1, b2) at this configuration."""
    factors = []
    for j, b in ((0, b1), (1, b2)):
        in_resonator = delta[j] > params.f_r[j]
        factors.append(_local_qubit_state(eps[j], delta[j], excited=bool(b) and not in_resonator))
    factors.append(_local_qubit_state(eps[2], delta[2], excited=False))
    for j, b in ((0, b1), (1, b2)):
        in_resonator = delta[j] > params.f_r[j]
        fock = np.zeros(2)
        fock[1 if (b and in_resonator) else 0] = 1.0
        factors.append(fock)
    # Index runs nu = q1 + 2*q2 + 4*qc + 8*r1 + 16*r2 with q1 fastest, so the
    # kron chain nests q1 innermost.
    state = factors[-1]
    for factor in factors[-2::-1]:
        state = np.kron(state, factor)
    return state


def logical_frame(
    params: model.SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
) -> LogicalFrame:
    """Resolve the four dressed computational states at a configuration."""
    h = model.static_hamiltonian(params, eps, delta)
    energies, vectors = hilbert.eigh(h)
    columns = []
    levels = []
    used: set[int] = set()
    for b2 in (0, 1):
        for b1 in (0, 1):
            target = _bare_label_state(params, eps, delta, b1, b2)
            overlaps = target.conj() @ vectors
            order = np.argsort(np.abs(overlaps))[::-1]
            pick = next(int(k) for k in order if int(k) not in used)
            if np.abs(overlaps[pick]) ** 2 < _MIN_OVERLAP_SQ:
                raise ValueError(
                    f"logical state ({b1},{b2}) is not resolvable at this bias"
                )
            used.add(pick)
            # Phase-align the dressed state to its bare label.
            phase = overlaps[pick] / abs(overlaps[pick])
            columns.append(vectors[:, pick] * phase)
            levels.append(energies[pick])
    return LogicalFrame(
        eps=tuple(eps),
        delta=tuple(delta),
        vectors=np.column_stack(columns),
        energies=np.array(levels),
    )


def frame_at(
    params: model.SystemParams, schedule: ControlSchedule, t: float
) -> LogicalFrame:
    """Logical frame for the schedule's bias configuration at time ``t``."""
    v = schedule.channel_values(t)
    return logical_frame(params, (v[0], v[2], v[4]), (v[1], v[3], v[5]))


def dressed_splitting(
    params: model.SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
    qubit: int,
) -> float:
    return logical_frame(params, eps, delta).splitting(qubit)


def logical_unitary(
    params: model.SystemParams,
    schedule: ControlSchedule,
    settings: PropagationSettings = DEFAULT_SETTINGS,
    frame_in: LogicalFrame | None = None,
    frame_out: LogicalFrame | None = None,
    noise_offset: np.ndarray | None = None,
) -> np.ndarray:
    """Noise-free 4x4 logical action of a schedule.

    Prepares the endpoint frames from the schedule's first and last bias
    configurations unless given, propagates the full system, projects, and
    unwinds the output frame's deterministic phases.  ``noise_offset`` adds
    static per-channel bias offsets (used to probe echo effectiveness).
    """
    if frame_in is None:
        frame_in = frame_at(params, schedule, 0.0)
    if frame_out is None:
        frame_out = frame_at(params, schedule, schedule.duration)
    plan = SchedulePlan(params, schedule)
    u = interval_propagator(plan, 0.0, schedule.duration, noise_offset, settings)
    v = frame_out.vectors.conj().T @ u @ frame_in.vectors
    unwind = np.exp(2j * math.pi * frame_out.energies * schedule.duration)
    return unwind[:, None] * v


def conditional_phase(v: np.ndarray) -> float:
    """Two-qubit conditional phase of a near-diagonal logical unitary (rad)."""
    phases = np.angle(np.diagonal(v))
    return float((phases[0] + phases[3] - phases[1] - phases[2] + math.pi) % (2 * math.pi) - math.pi)


def unitary_error(v: np.ndarray, target: np.ndarray) -> float:
    """Phase-aligned deviation 1 - |tr(T^dag V)| / dim of a logical unitary."""
    dim = target.shape[0]
    return max(0.0, 1.0 - abs(np.trace(target.conj().T @ v)) / dim)
