"""Discrete amplitude damping and the two-branch trajectory expansion.

Spontaneous decay is applied at interval boundaries as a Kraus channel per
qubit, expressed in the instantaneous energy eigenbasis of that qubit taken
in isolation (couplings and resonators ignored for the basis choice).  After
each damping step the mixed state is eigendecomposed and the simulation
follows the dominant eigenvector; a single sampled "correction" trajectory,
which takes one sub-dominant branch at one sampled step, accounts for the
remaining probability weight.  Branches with two or more sub-dominant
choices are neglected, an O((t/T1)^2) truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hilbert

__all__ = [
    "DampingStep",
    "TrajectoryRecord",
    "damping_gamma",
    "instantaneous_eigenbasis",
    "kraus_pair",
    "make_damping_step",
    "interval_damping_steps",
    "apply_damping",
    "damped_columns",
    "decompose_columns",
    "expansion_step",
    "sample_correction",
    "combine_trajectories",
]

_RANK_FLOOR = 1e-14


def damping_gamma(dtau, t1):
    """Decay probability over an interval: 1 - exp(-dtau/t1).

    Accepts scalars or arrays; ``t1 = inf`` gives exactly 0.
    """
    dtau = np.asarray(dtau, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    if np.any(dtau < 0):
        raise ValueError("interval duration must be non-negative")
    if np.any(t1 <= 0):
        raise ValueError("decay time must be positive")
    result = -np.expm1(-dtau / t1)
    return float(result) if result.ndim == 0 else result


def instantaneous_eigenbasis(eps: float, delta: float) -> np.ndarray:
    """Unitary whose columns are the (ground, excited) eigenstates of the
    isolated qubit Hamiltonian (eps*sz + delta*sx)/2 in the fixed basis."""
    if eps == 0.0 and delta == 0.0:
        raise ValueError("eigenbasis undefined at the fully degenerate point")
    h = 0.5 * (eps * hilbert.SIGMA_Z + delta * hilbert.SIGMA_X)
    _, vectors = hilbert.eigh(h)  # descending energy: (excited, ground)
    return vectors[:, ::-1]


def kraus_pair(gamma: float, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude-damping Kraus pair in the fixed basis.

    ``basis`` columns are (ground, excited).  K0 preserves the ground state
    and scales the excited amplitude by sqrt(1-gamma); K1 moves excited
    amplitude to the ground state with weight sqrt(gamma).  Completeness
    K0^dag K0 + K1^dag K1 = I holds algebraically.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("decay probability must lie in [0, 1]")
    k0_eig = np.diag([1.0, math.sqrt(1.0 - gamma)])
    k1_eig = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    k0 = basis @ k0_eig @ basis.conj().T
    k1 = basis @ k1_eig @ basis.conj().T
    return k0, k1


@dataclass(frozen=True)
class DampingStep:
    """One qubit's damping channel at one interval boundary."""

    qubit: int  # 0, 1, 2 = data qubit 1, data qubit 2, coupler
    gamma: float
    basis: np.ndarray  # 2x2 unitary, columns (ground, excited)
    time: float = 0.0

    def __post_init__(self):
        if self.qubit not in (0, 1, 2):
            raise ValueError("qubit must be 0, 1, or 2")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("decay probability must lie in [0, 1]")
        b = np.asarray(self.basis)
        if b.shape != (2, 2) or not np.allclose(
            b.conj().T @ b, np.eye(2), atol=1e-12
        ):
            raise ValueError("basis must be a 2x2 unitary")

    def embedded_kraus(self) -> tuple[np.ndarray, np.ndarray]:
        k0, k1 = kraus_pair(self.gamma, self.basis)
        return (
            hilbert.embed(k0, self.qubit),
            hilbert.embed(k1, self.qubit),
        )


def make_damping_step(
    qubit: int, dtau: float, t1: float, eps: float, delta: float, time: float = 0.0
) -> DampingStep:
    return DampingStep(
        qubit, damping_gamma(dtau, t1), instantaneous_eigenbasis(eps, delta), time
    )


def interval_damping_steps(schedule, t1, realization, index) -> tuple[DampingStep, ...]:
    """Damping steps for one noise interval, at its end boundary.

    The instantaneous qubit biases combine the scheduled waveform values,
    the microwave drive value (data qubits only), and the realization's
    telegraph offsets over the interval.  Qubits with infinite ``t1`` are
    skipped: their channel is exactly the identity.
    """
    t_end = realization.boundaries[index + 1]
    dtau = t_end - realization.boundaries[index]
    channel_values = schedule.channel_values(min(t_end, schedule.duration))
    drive = schedule.drive_values(min(t_end, schedule.duration))
    offsets = realization.values[index]
    steps = []
    for qubit in range(3):
        if not math.isfinite(t1[qubit]):
            continue
        eps = channel_values[2 * qubit] + offsets[2 * qubit]
        if qubit < 2:
            eps += drive[qubit]
        delta = channel_values[2 * qubit + 1] + offsets[2 * qubit + 1]
        steps.append(make_damping_step(qubit, dtau, t1[qubit], eps, delta, t_end))
    return tuple(steps)


def apply_damping(rho: np.ndarray, steps) -> np.ndarray:
    """Apply each qubit's damping channel sequentially to a density matrix."""
    out = np.asarray(rho, dtype=complex)
    for step in steps:
        k0, k1 = step.embedded_kraus()
        out = k0 @ out @ k0.conj().T + k1 @ out @ k1.conj().T
    return out


def damped_columns(psi: np.ndarray, steps) -> np.ndarray:
    """All Kraus-branch images of a pure state (or batch of pure states).

    For ``psi`` of shape (..., 32) returns shape (..., 32, 2**len(steps));
    column index bits follow the step order, first step most significant.
    The outer product sum of the columns equals ``apply_damping`` on the
    corresponding pure density matrix.
    """
    cols = np.asarray(psi, dtype=complex)[..., :, None]
    for step in steps:
        k0, k1 = step.embedded_kraus()
        cols = np.concatenate(
            (
                np.einsum("ij,...jc->...ic", k0, cols),
                np.einsum("ij,...jc->...ic", k1, cols),
            ),
            axis=-1,
        )
    return cols


def decompose_columns(columns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose rho = C C^dag from its (batched) factor columns.

    Works on the small Gram matrix C^dag C, so the cost scales with the
    branch count rather than the state dimension.  Returns descending
    eigenvalues (..., c) and the matching orthonormal eigenvectors
    (..., 32, c), phase-fixed like :func:`hilbert.eigh`; zero-weight
    branches get zero vectors.
    """
    c = np.asarray(columns, dtype=complex)
    gram = np.einsum("...ia,...ib->...ab", c.conj(), c)
    mu, w = np.linalg.eigh(gram)
    mu, w = mu[..., ::-1], w[..., :, ::-1]
    lams = np.clip(mu.real, 0.0, None)
    vectors = np.einsum("...ia,...ab->...ib", c, w)
    norms = np.sqrt(lams)[..., None, :]
    vectors = np.where(norms > _RANK_FLOOR, vectors / np.maximum(norms, _RANK_FLOOR), 0.0)
    # Phase convention: first significantly nonzero component real positive.
    mags = np.abs(vectors)
    peak = np.maximum(mags.max(axis=-2, keepdims=True), _RANK_FLOOR)
    first = (mags > 1e-8 * peak).argmax(axis=-2)
    ref = np.take_along_axis(vectors, first[..., None, :], axis=-2)[..., 0, :]
    mag_ref = np.abs(ref)
    phase = np.where(mag_ref > 0, ref.conj() / np.maximum(mag_ref, _RANK_FLOOR), 1.0)
    return lams, vectors * phase[..., None, :]


@dataclass
class TrajectoryRecord:
    """Eigenvalue bookkeeping for the trajectory expansion of one run."""

    eigenvalues: list = field(default_factory=list)

    def append(self, lams: np.ndarray) -> None:
        lams = np.asarray(lams, dtype=float)
        if lams.ndim != 1 or lams.size == 0:
            raise ValueError("eigenvalue list must be a non-empty 1-D array")
        if np.any(np.diff(lams) > 1e-12):
            raise ValueError("eigenvalues must be in descending order")
        self.eigenvalues.append(lams)

    @property
    def n_steps(self) -> int:
        return len(self.eigenvalues)

    def leading_probability(self) -> float:
        """P0: the weight of following the dominant branch at every step."""
        return float(np.prod([lams[0] for lams in self.eigenvalues]))

    def correction_probabilities(self) -> list[tuple[int, int, float]]:
        """Weights P(m, n) of single-deviation branches, 1-based (m >= 2)."""
        out = []
        prefix = 1.0
        for n, lams in enumerate(self.eigenvalues, start=1):
            for m in range(2, lams.size + 1):
                weight = prefix * lams[m - 1]
                if weight > 0.0:
                    out.append((m, n, weight))
            prefix *= lams[0]
        return out


def expansion_step(rho: np.ndarray, record: TrajectoryRecord | None, branch: int = 1):
    """Collapse a mixed state onto one eigenvector branch (1-based index).

    Appends the descending eigenvalue list to ``record`` when given, so the
    leading run accumulates the data needed to sample a correction run.
    """
    lams, vectors = hilbert.eigh(np.asarray(rho, dtype=complex))
    lams = np.clip(lams, 0.0, None)
    if record is not None:
        record.append(lams)
    if branch < 1 or branch > lams.size or lams[branch - 1] < _RANK_FLOOR:
        raise ValueError(f"branch {branch} exceeds the significant rank")
    return vectors[:, branch - 1]


def sample_correction(record: TrajectoryRecord, rng) -> tuple[int, int] | None:
    """Draw one single-deviation branch (m, n) with probability P(m,n)/sum.

    Returns None when every correction weight vanishes (no decay possible),
    in which case the leading run carries the full weight.
    """
    table = record.correction_probabilities()
    if not table:
        return None
    weights = np.array([w for _, _, w in table])
    total = weights.sum()
    if total <= 0.0:
        return None
    idx = rng.choice(len(table), p=weights / total)
    m, n, _ = table[idx]
    return m, n


def combine_trajectories(
    rho_lead: np.ndarray, rho_corr: np.ndarray, p0: float
) -> np.ndarray:
    """Weighted mixture of the leading and correction trajectories."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("leading probability must lie in [0, 1]")
    return p0 * np.asarray(rho_lead) + (1.0 - p0) * np.asarray(rho_corr)
