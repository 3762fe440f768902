"""Process tomography and worst-case error for the stored two-qubit space.

A channel on the two stored qubits acts on column-stacked 4x4 density
matrices: with vec(A X B) = (B^T (x) A) vec(X), conjugation by a unitary U
is the 16x16 matrix conj(U) (x) U, and a general linear channel is an
arbitrary 16x16 complex matrix.  Reconstruction drives a set of pure probe
states through the simulated gate and inverts the linear system through the
probe Gram matrix; the worst-case error against the ideal gate is found by
multistart local minimization of the output fidelity over pure states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numpy.random import SeedSequence, default_rng
from scipy.optimize import minimize

from . import montecarlo
from .control.calibrate import gate_target

LOGICAL_DIM = 4

# Probe Gram matrices beyond this condition number are treated as singular.
_GRAM_CONDITION_LIMIT = 1e12


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a 4x4 matrix into a 16-vector."""
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=complex).reshape(
        (LOGICAL_DIM, LOGICAL_DIM), order="F"
    )


def apply_channel(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply a 16x16 channel matrix to one 4x4 density matrix."""
    return unvec(np.asarray(s, dtype=complex) @ vec(rho))


# ---------------------------------------------------------------------------
# Probe states
# ---------------------------------------------------------------------------


def probe_states() -> np.ndarray:
    """(16, 4) pure probes: the 4 basis states, then (|j>+|k>)/sqrt2 and
    (|j>+i|k>)/sqrt2 for each pair j < k."""
    states = [np.eye(LOGICAL_DIM, dtype=complex)[j] for j in range(LOGICAL_DIM)]
    for j, k in combinations(range(LOGICAL_DIM), 2):
        for factor in (1.0, 1.0j):
            psi = np.zeros(LOGICAL_DIM, dtype=complex)
            psi[j] = 1.0
            psi[k] = factor
            states.append(psi / math.sqrt(2.0))
    return np.stack(states)


@dataclass(frozen=True)
class ProbeSet:
    """Pure input states whose projectors span (part of) operator space.

    ``condition`` records the conditioning of the probe Gram matrix; the
    full 16-state set is linearly independent, while the 4-state basis set
    spans only the diagonal and is meant for the unitary shortcut.
    """

    states: np.ndarray  # (n, 4) normalized pure states
    condition: float

    @classmethod
    def standard(cls) -> "ProbeSet":
        return cls.from_states(probe_states())

    @classmethod
    def basis(cls) -> "ProbeSet":
        return cls.from_states(np.eye(LOGICAL_DIM, dtype=complex))

    @classmethod
    def from_states(cls, states: np.ndarray) -> "ProbeSet":
        states = np.asarray(states, dtype=complex)
        matrix = _probe_matrix(states)
        gram = matrix.conj().T @ matrix
        return cls(states=states, condition=float(np.linalg.cond(gram)))

    def __len__(self) -> int:
        return self.states.shape[0]

    def projectors(self) -> np.ndarray:
        return np.einsum("ni,nj->nij", self.states, self.states.conj())


def _probe_matrix(states: np.ndarray) -> np.ndarray:
    """(16, n) matrix whose columns are the vec'd probe projectors."""
    projectors = np.einsum("ni,nj->nij", states, states.conj())
    return np.stack([vec(p) for p in projectors], axis=1)


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------


def reconstruct(probes: ProbeSet, outputs: np.ndarray) -> np.ndarray:
    """16x16 channel matrix S with S vec(rho_in) = vec(rho_out) per probe.

    Solved through the probe Gram system: with M the matrix of vec'd probe
    projectors and N the vec'd outputs, S = N (M^dag M)^-1 M^dag, which is
    the exact inverse for 16 independent probes and the minimum-norm
    solution for smaller sets.
    """
    outputs = np.asarray(outputs, dtype=complex)
    if outputs.shape != (len(probes), LOGICAL_DIM, LOGICAL_DIM):
        raise ValueError("outputs must be one 4x4 matrix per probe")
    m = _probe_matrix(probes.states)
    gram = m.conj().T @ m
    if not np.isfinite(probes.condition) or probes.condition > _GRAM_CONDITION_LIMIT:
        raise np.linalg.LinAlgError("probe Gram matrix is singular")
    n = np.stack([vec(rho) for rho in outputs], axis=1)
    return n @ np.linalg.solve(gram, m.conj().T)


def ideal_superoperator(
    gate: str | np.ndarray, theta: float | None = None
) -> np.ndarray:
    """Channel matrix of the textbook unitary (conj(U) (x) U)."""
    u = _resolve_unitary(gate, theta)
    return np.kron(u.conj(), u)


def _resolve_unitary(gate: str | np.ndarray, theta: float | None) -> np.ndarray:
    if isinstance(gate, str):
        return gate_target(gate, theta)
    u = np.asarray(gate, dtype=complex)
    if u.shape != (LOGICAL_DIM, LOGICAL_DIM):
        raise ValueError("gate unitary must be 4x4")
    return u


# ---------------------------------------------------------------------------
# Worst-case error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxErrorResult:
    """Worst-case error with the minimizing input state."""

    error: float
    state: np.ndarray  # (4,) normalized argmin input
    converged: bool  # at least two starts agree on the minimum
    n_starts: int

    def __float__(self) -> float:
        return self.error


def max_error(
    s_op: np.ndarray,
    gate: str | np.ndarray,
    theta: float | None = None,
    n_starts: int = 64,
    seed: int = 0,
) -> MaxErrorResult:
    """Maximum error probability of a measured channel against an ideal gate.

    Minimizes f(psi) = <psi| (S0^-1 S_op)(|psi><psi|) |psi> over pure states
    and returns 1 - min.  The ideal inverse is conjugation by U^dag (exact,
    never a numerical matrix inverse).  Minimization runs Nelder-Mead from
    every probe state plus random states, ``n_starts`` total, each over a
    6-parameter chart: the state is pinned to amplitude 1 at its largest
    component and parametrized by the three remaining complex ratios.
    ``converged`` is False when no second start lands at the best minimum
    within 1e-3 of the error.
    """
    u = _resolve_unitary(gate, theta)
    s_rel = np.kron(u.T, u.conj().T) @ np.asarray(s_op, dtype=complex)

    def fidelity(psi: np.ndarray) -> float:
        out = unvec(s_rel @ vec(np.outer(psi, psi.conj())))
        return float(np.real(psi.conj() @ out @ psi))

    def from_chart(pivot: int, x: np.ndarray) -> np.ndarray:
        psi = np.empty(LOGICAL_DIM, dtype=complex)
        psi[pivot] = 1.0
        rest = x[:3] + 1j * x[3:]
        psi[[q for q in range(LOGICAL_DIM) if q != pivot]] = rest
        return psi / np.linalg.norm(psi)

    starts = list(probe_states())
    rng = default_rng(SeedSequence((seed, n_starts)))
    while len(starts) < max(n_starts, len(starts)):
        raw = rng.normal(size=LOGICAL_DIM) + 1j * rng.normal(size=LOGICAL_DIM)
        starts.append(raw / np.linalg.norm(raw))

    minima: list[float] = []
    best_state = starts[0]
    for psi0 in starts:
        pivot = int(np.argmax(np.abs(psi0)))
        ratios = np.delete(psi0, pivot) / psi0[pivot]
        x0 = np.concatenate([ratios.real, ratios.imag])
        result = minimize(
            lambda x: fidelity(from_chart(pivot, x)),
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-13, "maxiter": 4000},
        )
        if float(result.fun) <= fidelity(psi0):
            value, state = float(result.fun), from_chart(pivot, result.x)
        else:
            value, state = fidelity(psi0), psi0
        minima.append(value)
        if value <= min(minima):
            best_state = state
    f_min = min(minima)
    error = max(0.0, 1.0 - f_min)
    tolerance = max(1e-3 * error, 1e-12)
    agreeing = sum(1 for value in minima if value - f_min <= tolerance)
    return MaxErrorResult(
        error=error,
        state=best_state,
        converged=agreeing >= 2,
        n_starts=len(starts),
    )


# ---------------------------------------------------------------------------
# Simulated tomography
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed channel with the raw probe data behind it."""

    superoperator: np.ndarray  # (16, 16)
    probes: ProbeSet
    outputs: np.ndarray  # (n, 4, 4) averaged reduced outputs
    batch: montecarlo.BatchResult


def run_tomography(
    config: montecarlo.RunConfig, probes: ProbeSet | None = None
) -> TomographyResult:
    """Drive every probe through the configured gate and reconstruct.

    All probes share each iteration's noise realization and interval
    propagators, so the probe marginals stay unbiased while the whole set
    costs little more than a single-state run.
    """
    probes = ProbeSet.standard() if probes is None else probes
    frame = montecarlo.storage_frame(
        config.params, config.resolved_calibration()
    )
    inputs = probes.states @ frame.vectors.T
    batch = montecarlo.run_batch(config, inputs)
    return TomographyResult(
        superoperator=reconstruct(probes, batch.reduced),
        probes=probes,
        outputs=batch.reduced,
        batch=batch,
    )


def four_probe_superoperator(config: montecarlo.RunConfig) -> np.ndarray:
    """Channel estimate from basis probes only, averaging conj(U) (x) U.

    Each iteration's leading trajectory maps the four basis probes to four
    output vectors that form the columns of an effective unitary; the
    channel is the iteration average of its conjugation map.  Exact for
    purely unitary evolution, but it ignores the correction branches and
    their weights, so it deviates from the full 16-probe inversion whenever
    decay is active.
    """
    probes = ProbeSet.basis()
    frame = montecarlo.storage_frame(
        config.params, config.resolved_calibration()
    )
    engine = montecarlo._Engine(config, probes.states @ frame.vectors.T)
    proj = montecarlo.logical_projector(engine.frame, engine.schedule.duration)
    total = np.zeros((16, 16), dtype=complex)
    for iteration in range(config.iterations):
        _, _, psi = montecarlo.run_realization(engine, iteration)
        u = proj @ psi.T
        total += np.kron(u.conj(), u)
    return total / config.iterations


# ---------------------------------------------------------------------------
# Decay-rate fits
# ---------------------------------------------------------------------------


def fit_rates(
    t: np.ndarray, rho22: np.ndarray, rho12: np.ndarray
) -> tuple[float, float]:
    """(Gamma_e, Gamma_g) from excited-population and coherence traces.

    Gamma_e is the log-linear least-squares rate of rho22.  Gamma_g then
    comes from a one-parameter fit of |rho12|, normalized at its first
    sample, to exp[-(Gamma_e/2) tau - (Gamma_g tau)^2] with Gamma_e held
    fixed; the population rate enters the coherence exponent at half weight.
    """
    t = np.asarray(t, dtype=float)
    rho22 = np.asarray(rho22, dtype=float)
    rho12 = np.asarray(rho12, dtype=float)
    if t.size < 3 or rho22.size != t.size or rho12.size != t.size:
        raise ValueError("need at least three aligned samples")
    if np.any(rho22 <= 0.0) or np.any(rho12 <= 0.0):
        raise ValueError("decay traces must be positive for log fitting")

    design = np.column_stack([np.ones_like(t), t])
    coeffs, *_ = np.linalg.lstsq(design, np.log(rho22), rcond=None)
    gamma_e = -float(coeffs[1])

    tau = t - t[0]
    y = np.log(rho12 / rho12[0]) + 0.5 * gamma_e * tau
    tau_sq = tau * tau
    denom = float(tau_sq @ tau_sq)
    if denom <= 0.0:
        raise ValueError("coherence trace spans no time")
    gamma_g_sq = -float(tau_sq @ y) / denom
    return gamma_e, math.sqrt(max(gamma_g_sq, 0.0))


# ---------------------------------------------------------------------------
# Tabular export
# ---------------------------------------------------------------------------


def superoperator_table(s: np.ndarray) -> str:
    """Channel matrix as text: one `row col real imag` line per entry."""
    s = np.asarray(s, dtype=complex)
    lines = ["row\tcol\treal\timag"]
    for i in range(s.shape[0]):
        for j in range(s.shape[1]):
            lines.append(
                f"{i}\t{j}\t{s[i, j].real:.12e}\t{s[i, j].imag:.12e}"
            )
    return "\n".join(lines) + "\n"
