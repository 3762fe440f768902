"""Hilbert-space conventions, operator embedding, and linear-algebra helpers.

The simulated device is five two-level subsystems: data qubits 1 and 2, the
tunable coupler qubit, and the two storage resonators (truncated to their two
lowest Fock states).  A basis state is indexed by

    nu = q1 + 2*q2 + 4*qc + 8*r1 + 16*r2

so qubit 1 occupies the least-significant bit.  For the qubits, bit value 0 is
the +1 eigenstate of sigma_z; for the resonators the bit is the Fock number.
"""

from __future__ import annotations

import numpy as np

# Subsystem indices (bit positions in the basis index).
QUBIT1, QUBIT2, COUPLER, RES1, RES2 = 0, 1, 2, 3, 4
N_SUBSYSTEMS = 5
DIM = 2**N_SUBSYSTEMS

SUBSYSTEM_NAMES = ("qubit1", "qubit2", "coupler", "resonator1", "resonator2")

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
# Number operator for a two-level-truncated resonator: a^dag a -> |1><1|.
NUMBER = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)

_HERMITICITY_TOL = 1e-8
_PHASE_TOL = 1e-8


def basis_index(q1: int, q2: int, qc: int, r1: int, r2: int) -> int:
    """Basis index of the product state with the given subsystem bits."""
    for bit in (q1, q2, qc, r1, r2):
        if bit not in (0, 1):
            raise ValueError("subsystem occupation bits must be 0 or 1")
    return q1 + 2 * q2 + 4 * qc + 8 * r1 + 16 * r2


def basis_state(q1: int, q2: int, qc: int, r1: int, r2: int) -> np.ndarray:
    """Product basis state vector with the given subsystem bits."""
    psi = np.zeros(DIM, dtype=complex)
    psi[basis_index(q1, q2, qc, r1, r2)] = 1.0
    return psi


def embed(op: np.ndarray, subsystem: int) -> np.ndarray:
    """Embed a 2x2 operator acting on one subsystem into the full space.

    The returned matrix acts as ``op`` on ``subsystem`` and as the identity on
    the other four subsystems, respecting the bit ordering of `basis_index`.
    """
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    if not 0 <= subsystem < N_SUBSYSTEMS:
        raise ValueError(f"subsystem index must be in [0, {N_SUBSYSTEMS})")
    below = np.eye(2**subsystem, dtype=complex)
    above = np.eye(2 ** (N_SUBSYSTEMS - 1 - subsystem), dtype=complex)
    # np.kron puts its second factor in the fast (least-significant) index.
    return np.kron(above, np.kron(op, below))


def eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix with fixed conventions.

    Returns ``(values, vectors)`` with eigenvalues sorted in descending order
    and ``vectors[:, k]`` the eigenvector of ``values[k]``.  Each eigenvector's
    global phase is fixed by making its first non-negligible component real
    and positive, so repeated calls (and different LAPACK builds) agree.

    Raises ValueError if the input deviates from Hermiticity by more than
    1e-8 in maximum absolute value.
    """
    matrix = np.asarray(matrix)
    deviation = np.max(np.abs(matrix - matrix.conj().T))
    if deviation > _HERMITICITY_TOL:
        raise ValueError(f"matrix is not Hermitian (deviation {deviation:.2e})")
    values, vectors = np.linalg.eigh(matrix)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    _fix_phases(vectors)
    return values, vectors


def _fix_phases(vectors: np.ndarray) -> None:
    """Rotate each column so its first non-negligible entry is real positive."""
    for k in range(vectors.shape[1]):
        column = vectors[:, k]
        magnitudes = np.abs(column)
        threshold = _PHASE_TOL * magnitudes.max()
        first = int(np.argmax(magnitudes > threshold))
        phase = column[first] / magnitudes[first]
        vectors[:, k] = column / phase


def partial_trace(rho: np.ndarray, keep: tuple[int, ...] = (RES1, RES2)) -> np.ndarray:
    """Trace out all subsystems not listed in ``keep``.

    ``keep`` lists subsystem indices in ascending order; in the returned
    matrix the first kept subsystem is the least-significant bit.  The default
    keeps the two resonators, producing the 4x4 logical-subspace state indexed
    by ``r1 + 2*r2``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"expected a {DIM}x{DIM} density matrix")
    keep = tuple(keep)
    if sorted(set(keep)) != list(keep) or not keep:
        raise ValueError("keep must list distinct subsystem indices in ascending order")
    if not all(0 <= s < N_SUBSYSTEMS for s in keep):
        raise ValueError("subsystem index out of range")

    # Reshape to one axis per subsystem per side.  Axis p holds subsystem
    # N_SUBSYSTEMS-1-p, so axis 0 is the slowest bit (resonator 2) and the
    # last ket axis the fastest (qubit 1).
    tensor = rho.reshape((2,) * (2 * N_SUBSYSTEMS))
    ket_letters = [chr(ord("a") + p) for p in range(N_SUBSYSTEMS)]
    bra_letters = []
    for p in range(N_SUBSYSTEMS):
        subsystem = N_SUBSYSTEMS - 1 - p
        if subsystem in keep:
            bra_letters.append(chr(ord("a") + N_SUBSYSTEMS + p))
        else:
            bra_letters.append(ket_letters[p])  # repeated letter: traced out
    out_ket = [ket_letters[N_SUBSYSTEMS - 1 - s] for s in reversed(keep)]
    out_bra = [bra_letters[N_SUBSYSTEMS - 1 - s] for s in reversed(keep)]
    subscripts = (
        "".join(ket_letters) + "".join(bra_letters) + "->" + "".join(out_ket + out_bra)
    )
    dim_out = 2 ** len(keep)
    return np.einsum(subscripts, tensor).reshape(dim_out, dim_out)


def match_eigenvectors(reference: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Permutation aligning eigenvector columns to a reference frame.

    Returns integer array ``perm`` with ``candidates[:, perm[j]]`` the column
    of maximal overlap with ``reference[:, j]``.  Raises ValueError when the
    assignment is ambiguous (two references claim the same candidate), which
    signals a level crossing.
    """
    overlaps = np.abs(reference.conj().T @ candidates)
    perm = np.argmax(overlaps, axis=1)
    if len(set(perm.tolist())) != len(perm):
        raise ValueError("ambiguous eigenvector matching (level crossing)")
    return perm
