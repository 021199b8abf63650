"""Standard operators on small Hilbert spaces.

Spin basis ordering is (|up>, |down>), so ``sigma_z = diag(1, -1)`` and
``sigma_minus = |down><up|``.
"""

from __future__ import annotations

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)

SPIN_UP = np.array([[1, 0], [0, 0]], dtype=complex)
SPIN_DOWN = np.array([[0, 0], [0, 1]], dtype=complex)


def pauli_dot(vec) -> np.ndarray:
    """``vec . sigma`` for a (possibly complex) 3-vector."""
    vx, vy, vz = vec
    return vx * SIGMA_X + vy * SIGMA_Y + vz * SIGMA_Z


def destroy(n: int) -> np.ndarray:
    """Annihilation operator truncated to ``n`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def number(n: int) -> np.ndarray:
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def fock_dm(n: int, k: int = 0) -> np.ndarray:
    rho = np.zeros((n, n), dtype=complex)
    rho[k, k] = 1.0
    return rho


def dagger(op: np.ndarray) -> np.ndarray:
    return op.conj().T
