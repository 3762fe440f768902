"""Monte-Carlo orchestration: noise sampling, propagation, damping, averaging.

Each iteration draws one telegraph-noise realization, propagates the input
state(s) across its piecewise-constant intervals, applies amplitude damping
at the interval boundaries, and follows the two-branch trajectory expansion:
a leading run that tracks the dominant eigenvector of every damping step,
plus one correction run that deviates onto a single sampled sub-dominant
branch and then continues along the dominant Kraus image.  Per-iteration
density matrices are averaged with a fixed chunked compensated reduction so
threaded and serial execution produce bit-identical results.

All input states evolved within one iteration share the same realization and
the same per-interval propagators; correction-branch sampling uses a stream
keyed by (seed, iteration, probe) so probes stay statistically independent.
"""

from __future__ import annotations

import math
import sys
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import decay, hilbert
from .control import compile as gates
from .control.calibrate import default_calibration
from .control.logical import LogicalFrame, logical_frame
from .control.windows import COUPLER_OFF
from .model import SystemParams
from .noise import Ensemble, NoiseParams, Realization, build_ensemble, sample_realization
from .propagate import PropagationSettings, SchedulePlan, interval_propagator
from .schedule import ControlSchedule

__all__ = [
    "RunConfig",
    "RunResult",
    "BatchResult",
    "storage_frame",
    "logical_projector",
    "reduce_to_logical",
    "leading_weight_floor",
    "run_realization",
    "run_gate",
    "run_batch",
]

# Stream tag separating correction-branch draws from the noise streams (which
# use (seed, iteration, channel) keys).
_CORRECTION_STREAM_TAG = 7001

# Fixed reduction chunk: iterations are summed serially inside each chunk and
# chunks are merged in index order, so the average never depends on how the
# chunks were scheduled across threads.
_CHUNK = 64

_GATE_SETTINGS = PropagationSettings(rtol=1e-9)


@dataclass(frozen=True)
class RunConfig:
    """One Monte-Carlo study: a gate, an environment, and an iteration budget."""

    gate: str
    params: SystemParams = field(default_factory=SystemParams)
    noise: NoiseParams = field(default_factory=lambda: NoiseParams(amplitude=0.0))
    iterations: int = 1
    seed: int = 0
    input_state: int = 0  # logical index b1 + 2*b2
    theta: float | None = None  # CPhase angle
    echo: bool = True  # False compiles the refocusing-free variant
    calibration: gates.CalibrationSet | None = None
    settings: PropagationSettings = _GATE_SETTINGS
    workers: int = 1
    progress: bool = False

    def __post_init__(self) -> None:
        if self.gate.lower() not in gates.GATES:
            raise ValueError(f"unknown gate {self.gate!r}; choose from {gates.GATES}")
        if self.iterations < 1:
            raise ValueError("iteration count must be at least 1")
        if not 0 <= self.input_state < 4:
            raise ValueError("input state label must be a logical index 0..3")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")

    def resolved_calibration(self) -> gates.CalibrationSet:
        if self.calibration is not None:
            return self.calibration
        return default_calibration()


@dataclass(frozen=True)
class BatchResult:
    """Averages for a batch of input states sharing noise realizations."""

    rho: np.ndarray  # (n_inputs, 32, 32) averaged density matrices
    reduced: np.ndarray  # (n_inputs, 4, 4) logical reductions
    p0: np.ndarray  # (iterations, n_inputs) leading-trajectory weights
    rho_se: np.ndarray  # (n_inputs, 32, 32) entrywise batch-means standard error
    p0_floor: float  # loose lower bound on healthy leading weights
    duration: float  # schedule length (ns)
    elapsed: float  # wall-clock seconds

    @property
    def iterations(self) -> int:
        return self.p0.shape[0]


@dataclass(frozen=True)
class RunResult:
    """Averaged output of one gate run from a single input state."""

    rho: np.ndarray  # (32, 32)
    reduced: np.ndarray  # (4, 4)
    p0: np.ndarray  # (iterations,)
    rho_se: np.ndarray  # (32, 32)
    p0_floor: float
    duration: float
    elapsed: float

    @property
    def iterations(self) -> int:
        return self.p0.shape[0]


def storage_frame(params: SystemParams, cal: gates.CalibrationSet) -> LogicalFrame:
    """Dressed computational basis where gates begin and end."""
    return logical_frame(
        params,
        (0.0, 0.0, COUPLER_OFF[0]),
        (cal.delta_storage, cal.delta_storage, COUPLER_OFF[1]),
    )


def logical_projector(frame: LogicalFrame, duration: float) -> np.ndarray:
    """(4, 32) map from lab-frame states to the unwound logical basis."""
    unwind = np.exp(2j * math.pi * frame.energies * duration)
    return unwind[:, None] * frame.vectors.conj().T


def reduce_to_logical(
    rho: np.ndarray, frame: LogicalFrame, duration: float
) -> np.ndarray:
    """Project a 32x32 density matrix onto the logical space (not renormalized)."""
    proj = logical_projector(frame, duration)
    return proj @ np.asarray(rho, dtype=complex) @ proj.conj().T


def leading_weight_floor(duration: float, t1: tuple[float, float, float]) -> float:
    """Loose bound exp(-3 t Sum 1/T1) below which leading weights are suspect."""
    rate = sum(1.0 / t for t in t1 if math.isfinite(t))
    return math.exp(-3.0 * duration * rate)


# ---------------------------------------------------------------------------
# Single-iteration pipeline
# ---------------------------------------------------------------------------


class _Engine:
    """Shared immutable context for all iterations of one run."""

    def __init__(self, config: RunConfig, inputs: np.ndarray):
        cal = config.resolved_calibration()
        self.config = config
        self.inputs = np.asarray(inputs, dtype=complex)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != hilbert.DIM:
            raise ValueError("inputs must have shape (n_states, 32)")
        self.schedule: ControlSchedule = gates.compile_gate(
            config.gate, config.params, cal, theta=config.theta, echo=config.echo
        )
        self.plan = SchedulePlan(config.params, self.schedule)
        self.ensemble: Ensemble = build_ensemble(
            config.noise, config.params, config.seed
        )
        self.t1 = config.params.t1
        self.any_decay = any(math.isfinite(t) for t in self.t1)
        self.frame = storage_frame(config.params, cal)

    def realization(self, iteration: int) -> Realization:
        return sample_realization(self.ensemble, self.schedule.duration, iteration)


def _k0_product(steps) -> np.ndarray:
    """Dominant Kraus image of one boundary's damping (all qubits)."""
    out = None
    for step in steps:
        k0 = step.embedded_kraus()[0]
        out = k0 if out is None else k0 @ out
    return out


def run_realization(
    engine: _Engine, iteration: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One noise realization.

    Returns (combined rho (n,32,32), p0 (n,), leading state (n,32)); the
    leading state is the final normalized no-jump trajectory, before the
    sampled correction branch is mixed into rho.
    """
    config = engine.config
    realization = engine.realization(iteration)
    boundaries = realization.boundaries
    n_probes = engine.inputs.shape[0]

    propagators: list[np.ndarray] = []
    step_list: list[tuple] = []
    for i in range(realization.n_intervals):
        a, b = boundaries[i], boundaries[i + 1]
        propagators.append(
            interval_propagator(
                engine.plan, a, b, realization.values[i], config.settings
            )
        )
        if engine.any_decay:
            step_list.append(
                decay.interval_damping_steps(
                    engine.schedule, engine.t1, realization, i
                )
            )
        else:
            step_list.append(())

    psi = engine.inputs.copy()
    records = [decay.TrajectoryRecord() for _ in range(n_probes)]
    damp_at: list[int] = []  # interval index of each recorded damping step
    pre_states: list[np.ndarray] = []  # (n, 32) state entering each damping step
    for i, u in enumerate(propagators):
        psi = psi @ u.T
        steps = step_list[i]
        if not steps:
            continue
        pre_states.append(psi.copy())
        damp_at.append(i)
        cols = decay.damped_columns(psi, steps)
        lams, vecs = decay.decompose_columns(cols)
        for p in range(n_probes):
            records[p].append(lams[p])
        psi = vecs[..., 0]

    rho = np.einsum("pi,pj->pij", psi, psi.conj())
    p0 = np.ones(n_probes)
    if not engine.any_decay or not damp_at:
        return rho, p0, psi

    for p in range(n_probes):
        p0[p] = records[p].leading_probability()
        rng = np.random.default_rng(
            np.random.SeedSequence(
                (config.seed, iteration + 1, p, _CORRECTION_STREAM_TAG)
            )
        )
        choice = decay.sample_correction(records[p], rng)
        if choice is None:
            continue
        m, n_step = choice
        start = damp_at[n_step - 1]
        cols = decay.damped_columns(pre_states[n_step - 1][p], step_list[start])
        _, vecs = decay.decompose_columns(cols)
        phi = vecs[:, m - 1]
        for i in range(start + 1, len(propagators)):
            phi = propagators[i] @ phi
            steps = step_list[i]
            if steps:
                phi = _k0_product(steps) @ phi
                norm = np.linalg.norm(phi)
                if norm <= 0.0:
                    raise RuntimeError(
                        f"correction branch annihilated at iteration {iteration}"
                    )
                phi = phi / norm
        rho[p] = decay.combine_trajectories(
            rho[p], np.outer(phi, phi.conj()), p0[p]
        )
    return rho, p0, psi


# ---------------------------------------------------------------------------
# Averaging
# ---------------------------------------------------------------------------


class _Progress:
    """Thread-safe completion counter that reports to standard error."""

    def __init__(self, total: int, enabled: bool):
        self.total = total
        self.enabled = enabled
        self.done = 0
        self._lock = threading.Lock()

    def advance(self, count: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            self.done += count
            print(
                f"iterations {self.done}/{self.total}", file=sys.stderr, flush=True
            )


def _run_chunk(
    engine: _Engine, start: int, stop: int, progress: _Progress
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Serial compensated sum of iterations [start, stop)."""
    n = engine.inputs.shape[0]
    rho_sum = np.zeros((n, hilbert.DIM, hilbert.DIM), dtype=complex)
    comp = np.zeros_like(rho_sum)
    p0_rows = []
    for iteration in range(start, stop):
        try:
            rho, p0, _ = run_realization(engine, iteration)
        except Exception as exc:  # noqa: BLE001 - attach the iteration index
            raise RuntimeError(f"iteration {iteration} failed: {exc}") from exc
        term = rho - comp
        total = rho_sum + term
        comp = (total - rho_sum) - term
        rho_sum = total
        p0_rows.append(p0)
    progress.advance(stop - start)
    return rho_sum, p0_rows


def run_batch(config: RunConfig, inputs: np.ndarray | None = None) -> BatchResult:
    """Average a gate run over iterations for a batch of shared-noise inputs.

    ``inputs`` defaults to the single configured logical input state.  The
    reduction is chunked and merged in fixed order, so results are identical
    for any worker count.
    """
    t_start = time.perf_counter()
    engine = _Engine(config, _resolve_inputs(config, inputs))
    n = engine.inputs.shape[0]
    total = config.iterations
    edges = list(range(0, total, _CHUNK)) + [total]
    spans = list(zip(edges[:-1], edges[1:]))
    progress = _Progress(total, config.progress)

    if config.workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(
                pool.map(lambda s: _run_chunk(engine, s[0], s[1], progress), spans)
            )
    else:
        parts = [_run_chunk(engine, a, b, progress) for a, b in spans]

    rho_sum = np.zeros((n, hilbert.DIM, hilbert.DIM), dtype=complex)
    comp = np.zeros_like(rho_sum)
    chunk_means = []
    p0_rows: list[np.ndarray] = []
    for (a, b), (part_rho, part_p0) in zip(spans, parts):
        term = part_rho - comp
        merged = rho_sum + term
        comp = (merged - rho_sum) - term
        rho_sum = merged
        chunk_means.append(part_rho / (b - a))
        p0_rows.extend(part_p0)
    rho = rho_sum / total
    p0 = np.vstack(p0_rows)

    means = np.stack(chunk_means)
    if means.shape[0] > 1:
        var = means.real.var(axis=0, ddof=1) + means.imag.var(axis=0, ddof=1)
        rho_se = np.sqrt(var / means.shape[0])
    else:
        rho_se = np.zeros((n, hilbert.DIM, hilbert.DIM))

    floor = leading_weight_floor(engine.schedule.duration, engine.t1)
    if np.any(p0 < floor):
        warnings.warn(
            f"leading-trajectory weight fell below exp(-3 t Sum 1/T1) = {floor:.3e};"
            " the two-term expansion may be unreliable for this configuration",
            stacklevel=2,
        )

    reduced = np.stack(
        [
            reduce_to_logical(rho[p], engine.frame, engine.schedule.duration)
            for p in range(n)
        ]
    )
    return BatchResult(
        rho=rho,
        reduced=reduced,
        p0=p0,
        rho_se=rho_se,
        p0_floor=floor,
        duration=engine.schedule.duration,
        elapsed=time.perf_counter() - t_start,
    )


def _resolve_inputs(config: RunConfig, inputs: np.ndarray | None) -> np.ndarray:
    if inputs is not None:
        return np.asarray(inputs, dtype=complex)
    frame = storage_frame(config.params, config.resolved_calibration())
    return frame.vectors[:, config.input_state][None, :]


def run_gate(config: RunConfig, inputs: np.ndarray | None = None) -> RunResult:
    """Run one gate study for a single input state (first of ``inputs``)."""
    batch = run_batch(config, inputs)
    return RunResult(
        rho=batch.rho[0],
        reduced=batch.reduced[0],
        p0=batch.p0[:, 0],
        rho_se=batch.rho_se[0],
        p0_floor=batch.p0_floor,
        duration=batch.duration,
        elapsed=batch.elapsed,
    )
