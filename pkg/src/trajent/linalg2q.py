"""Dense linear algebra on the two-qubit Hilbert space.

States are complex arrays of shape ``(4,)`` in the basis
``|00>, |01>, |10>, |11>`` (first label = qubit 1). Operators are ``(4, 4)``
complex arrays. Most functions also accept leading batch axes.
"""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


IDENTITY2 = _frozen(np.eye(2))
SIGMA_X = _frozen([[0, 1], [1, 0]])
SIGMA_Y = _frozen([[0, -1j], [1j, 0]])
SIGMA_Z = _frozen([[1, 0], [0, -1]])
# sigma_+ excites |0> -> |1>; sigma_- sigma_+ = |0><0|
SIGMA_PLUS = _frozen([[0, 0], [1, 0]])
SIGMA_MINUS = _frozen([[0, 1], [0, 0]])
IDENTITY4 = _frozen(np.eye(4))

# sigma_y (x) sigma_y is real and symmetric
SPIN_FLIP_MATRIX = np.real(np.kron(SIGMA_Y, SIGMA_Y))
SPIN_FLIP_MATRIX.setflags(write=False)

PHI_PLUS = _frozen(np.array([1, 0, 0, 1]) / np.sqrt(2))
PHI_MINUS = _frozen(np.array([1, 0, 0, -1]) / np.sqrt(2))
PSI_PLUS = _frozen(np.array([0, 1, 1, 0]) / np.sqrt(2))
PSI_MINUS = _frozen(np.array([0, 1, -1, 0]) / np.sqrt(2))


def normalize(psi) -> np.ndarray:
    """Return ``psi`` scaled to unit norm along its last axis."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("cannot normalize a zero or non-finite state")
    return psi / norm


def pure_state(amplitudes) -> np.ndarray:
    """Build a normalized two-qubit state from four complex amplitudes."""
    psi = np.asarray(amplitudes, dtype=complex)
    if psi.shape != (4,):
        raise ValueError(f"expected 4 amplitudes, got shape {psi.shape}")
    return normalize(psi)


def is_normalized(psi, tol: float = NORM_TOL) -> bool:
    return bool(np.all(np.abs(np.linalg.norm(psi, axis=-1) - 1.0) <= tol))


def spin_flip(psi) -> np.ndarray:
    """Spin-flipped state ``(sigma_y x sigma_y) psi*``."""
    return np.conj(psi) @ SPIN_FLIP_MATRIX.T


def embed(op, qubit: int) -> np.ndarray:
    """Embed a single-qubit operator on ``qubit`` (1 or 2) into the 4-dim space."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"single-qubit operator must be 2x2, got {op.shape}")
    if qubit == 1:
        return np.kron(op, IDENTITY2)
    if qubit == 2:
        return np.kron(IDENTITY2, op)
    raise ValueError(f"qubit index must be 1 or 2, got {qubit!r}")


def expectation(op, psi) -> complex:
    """``<psi|op|psi>``."""
    psi = np.asarray(psi, dtype=complex)
    return complex(np.vdot(psi, np.asarray(op) @ psi))


def tilde_expectation(op, psi) -> complex:
    """``<spin_flip(psi)|op|psi>``, a bilinear (not sesquilinear) form in psi."""
    psi = np.asarray(psi, dtype=complex)
    return complex(psi @ SPIN_FLIP_MATRIX @ (np.asarray(op) @ psi))


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * np.conj(psi[..., None, :])


def partial_trace(rho, keep: int) -> np.ndarray:
    """Reduced density matrix of qubit ``keep`` (1 or 2)."""
    r = np.asarray(rho, dtype=complex).reshape(rho.shape[:-2] + (2, 2, 2, 2))
    if keep == 1:
        return np.einsum("...ajbj->...ab", r)
    if keep == 2:
        return np.einsum("...jajb->...ab", r)
    raise ValueError(f"qubit index must be 1 or 2, got {keep!r}")


def is_density_matrix(rho, tol: float = NORM_TOL) -> bool:
    """Hermitian, unit trace and positive semidefinite within ``tol``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4) and rho.shape[-2:] != (2, 2):
        return False
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2)))) <= tol
    trace = np.all(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0) <= tol)
    if not (herm and trace):
        return False
    evals = np.linalg.eigvalsh(0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2))))
    return bool(np.all(evals >= -tol))


def trace_distance(rho, sigma) -> np.ndarray:
    """``0.5 * ||rho - sigma||_1`` for Hermitian inputs (batched)."""
    d = np.asarray(rho) - np.asarray(sigma)
    d = 0.5 * (d + np.conj(np.swapaxes(d, -1, -2)))
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(d)), axis=-1)


def local_unitary(rng: np.random.Generator) -> np.ndarray:
    """Random product unitary ``U1 x U2`` (Haar on each factor)."""

    def haar2():
        z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
        q, r = np.linalg.qr(z)
        d = np.diag(r)
        return q * (d / np.abs(d))

    return np.kron(haar2(), haar2())
