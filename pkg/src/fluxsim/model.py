"""Device model: Hamiltonian assembly, flux-noise conversion, spectral formulas.

Energies are expressed in GHz (angular factors 2*pi enter only in the
propagator), times in ns, flux in units of the flux quantum.  The full
Hamiltonian is

    H = (1/2) * sum_{i in {1,2,C}} [ (eps_i + drive_i(t)) sigma_i^z
                                     + delta_i sigma_i^x ]
      + sum_{j in {1,2}} [ f_rj * n_j + j_res (a_j + a_j^dag) sigma_j^z ]
      + (j_c/2) sigma_C^z (sigma_1^x + sigma_2^x)

with drive_i(t) = amp_i(t) * cos(2*pi*freq_i*t + phase_i) applied to the two
data qubits only, and the resonators truncated to two levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hilbert
from .hilbert import COUPLER, QUBIT1, QUBIT2, RES1, RES2

# Noise/control channel ordering used throughout the package.
CHANNELS = ("eps1", "delta1", "eps2", "delta2", "epsC", "deltaC")
N_CHANNELS = len(CHANNELS)

# Physical constants for the flux-to-energy conversion.
PHI0 = 2.067833848e-15  # flux quantum, Wb
H_PLANCK = 6.62607015e-34  # Planck constant, J s

# Assumed qubit persistent current (A): sets the energy-bias flux slope
# d(eps)/d(Phi) = 2 * I_p * Phi0 / h, expressed in GHz per flux quantum.
PERSISTENT_CURRENT = 400e-9
SLOPE_EPS = 2 * PERSISTENT_CURRENT * PHI0 / H_PLANCK / 1e9

# Assumed tunnel-splitting flux sensitivity (GHz per flux quantum), from a
# junction-loop mutual coupling of about 5 mPhi0 per unit splitting change.
SLOPE_DELTA = 60.0

# Sanity bounds on control values (GHz).
MAX_EPS = 50.0
MAX_DELTA = 20.0


@dataclass(frozen=True)
class SystemParams:
    """Static device parameters.

    Attributes
    ----------
    f_r : resonator frequencies (GHz), one per data qubit.
    j_res : qubit-resonator coupling (GHz); the avoided crossing between a
        qubit and its resonator has gap 2*j_res.
    j_c : coupler-qubit coupling (GHz).
    t1 : decay times (ns) of qubit 1, qubit 2, and the coupler; math.inf
        disables decay for that qubit.  Resonators are lossless.
    slopes : flux-to-energy conversion slopes (GHz per flux quantum), one per
        entry of CHANNELS.
    """

    f_r: tuple[float, float] = (9.0, 11.0)
    j_res: float = 0.75
    j_c: float = 0.3
    t1: tuple[float, float, float] = (math.inf, math.inf, math.inf)
    slopes: tuple[float, ...] = field(
        default=(SLOPE_EPS, SLOPE_DELTA, SLOPE_EPS, SLOPE_DELTA, SLOPE_EPS, SLOPE_DELTA)
    )

    def __post_init__(self) -> None:
        if len(self.f_r) != 2 or len(self.t1) != 3 or len(self.slopes) != N_CHANNELS:
            raise ValueError("parameter tuple has wrong length")
        if self.j_res <= 0 or self.j_c <= 0:
            raise ValueError("couplings must be positive")
        if any(t <= 0 for t in self.t1):
            raise ValueError("decay times must be positive (math.inf to disable)")


def qubit_splitting(eps: float, delta: float) -> float:
    """Level splitting sqrt(eps^2 + delta^2) of an isolated qubit (GHz)."""
    return math.hypot(eps, delta)


def conditional_shift(j_c: float, delta_c: float) -> float:
    """Conditional frequency shift of either data qubit (GHz).

    When both qubits sit at their degeneracy points and the coupler is
    parked at bias (0, delta_c), each qubit's splitting depends on the other
    qubit's state; the difference is

        delta_nu = delta_c * (1 - sqrt(1 + (2*j_c/delta_c)**2)).

    The shift is negative and grows quadratically with j_c for small j_c.
    """
    if delta_c <= 0:
        raise ValueError("coupler splitting must be positive")
    return delta_c * (1.0 - math.sqrt(1.0 + (2.0 * j_c / delta_c) ** 2))


def flux_to_energy(dphi: float | np.ndarray, slope: float) -> float | np.ndarray:
    """Convert a flux excursion (flux quanta) to an energy shift (GHz)."""
    return dphi * slope


# ---------------------------------------------------------------------------
# Embedded operator cache
# ---------------------------------------------------------------------------

SZ = tuple(hilbert.embed(hilbert.SIGMA_Z, s) for s in (QUBIT1, QUBIT2, COUPLER))
SX = tuple(hilbert.embed(hilbert.SIGMA_X, s) for s in (QUBIT1, QUBIT2, COUPLER))
NUM_R = tuple(hilbert.embed(hilbert.NUMBER, s) for s in (RES1, RES2))
X_R = tuple(hilbert.embed(hilbert.SIGMA_X, s) for s in (RES1, RES2))

# Channel -> the constant matrix multiplying that control/noise value.
CHANNEL_OPS = (
    0.5 * SZ[0],
    0.5 * SX[0],
    0.5 * SZ[1],
    0.5 * SX[1],
    0.5 * SZ[2],
    0.5 * SX[2],
)

# Drive on data qubit j enters through (amp/2) * cos(...) * sigma_j^z.
DRIVE_OPS = (0.5 * SZ[0], 0.5 * SZ[1])


def coupling_hamiltonian(params: SystemParams) -> np.ndarray:
    """Control-independent part: resonators and qubit-qubit coupling."""
    h = np.zeros((hilbert.DIM, hilbert.DIM), dtype=complex)
    for j in range(2):
        h += params.f_r[j] * NUM_R[j] + params.j_res * X_R[j] @ SZ[j]
    h += 0.5 * params.j_c * SZ[2] @ (SX[0] + SX[1])
    return h


def static_hamiltonian(
    params: SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Hamiltonian at fixed bias values, without microwave drive terms.

    ``noise`` adds per-channel energy offsets (GHz, CHANNELS order).
    """
    values = np.zeros(N_CHANNELS)
    values[0::2] = eps
    values[1::2] = delta
    if noise is not None:
        values = values + np.asarray(noise, dtype=float)
    _check_bounds(values)
    h = coupling_hamiltonian(params).copy()
    for value, op in zip(values, CHANNEL_OPS):
        if value != 0.0:
            h += value * op
    return h


def assemble_hamiltonian(
    params: SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
    t: float = 0.0,
    drive_amp: tuple[float, float] = (0.0, 0.0),
    drive_freq: tuple[float, float] = (0.0, 0.0),
    drive_phase: tuple[float, float] = (0.0, 0.0),
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Full 32x32 Hamiltonian at time ``t`` (GHz units).

    The microwave drives are evaluated in the lab frame, without any
    rotating-wave approximation: drive j contributes
    ``drive_amp[j] * cos(2*pi*drive_freq[j]*t + drive_phase[j])`` to the
    sigma_z bias of data qubit j.
    """
    h = static_hamiltonian(params, eps, delta, noise)
    for j in range(2):
        if drive_amp[j] != 0.0:
            envelope = drive_amp[j] * math.cos(
                2.0 * math.pi * drive_freq[j] * t + drive_phase[j]
            )
            h = h + envelope * DRIVE_OPS[j]
    return h


def _check_bounds(values: np.ndarray) -> None:
    eps_values = values[0::2]
    delta_values = values[1::2]
    if np.any(np.abs(eps_values) > MAX_EPS):
        raise ValueError(f"energy bias exceeds sanity bound {MAX_EPS} GHz")
    if np.any(delta_values < 0.0) or np.any(delta_values > MAX_DELTA):
        raise ValueError(f"tunnel splitting outside [0, {MAX_DELTA}] GHz")


# ---------------------------------------------------------------------------
# Three-qubit block (no resonators), for coupler-physics analysis
# ---------------------------------------------------------------------------

_SZ3 = tuple(np.kron(np.eye(2 ** (2 - s), dtype=complex),
                     np.kron(hilbert.SIGMA_Z, np.eye(2**s, dtype=complex)))
             for s in range(3))
_SX3 = tuple(np.kron(np.eye(2 ** (2 - s), dtype=complex),
                     np.kron(hilbert.SIGMA_X, np.eye(2**s, dtype=complex)))
             for s in range(3))


def qubit_coupler_block(
    params: SystemParams,
    eps: tuple[float, float, float],
    delta: tuple[float, float, float],
) -> np.ndarray:
    """8x8 Hamiltonian of the two data qubits and the coupler alone.

    Index ordering matches the full space with the resonators dropped:
    nu = q1 + 2*q2 + 4*qc.  Used for conditional-shift analysis, where the
    resonators are spectators.
    """
    h = np.zeros((8, 8), dtype=complex)
    for i in range(3):
        h += 0.5 * (eps[i] * _SZ3[i] + delta[i] * _SX3[i])
    h += 0.5 * params.j_c * _SZ3[2] @ (_SX3[0] + _SX3[1])
    return h
