"""Dense operator and superoperator algebra.

Operators are ``(d, d)`` complex arrays and superoperators are ``(d**2, d**2)``
complex arrays acting on column-stacked vectorizations, so that the map
``X -> A X B`` is represented by ``kron(B.T, A)``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import (
    DegenerateKernel,
    DimensionMismatch,
    NonFiniteError,
    NonNormalizable,
    StateInvariantViolation,
)


# ---------------------------------------------------------------------------
# vectorization


def vectorize(op: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a vector of length ``d**2``."""
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {op.shape}")
    return op.reshape(-1, order="F")


def devectorize(vec: np.ndarray, dim: int | None = None) -> np.ndarray:
    vec = np.asarray(vec)
    if dim is None:
        dim = math.isqrt(vec.shape[-1])
    if dim * dim != vec.shape[-1]:
        raise DimensionMismatch(f"vector length {vec.shape[-1]} is not a square")
    return vec.reshape(dim, dim, order="F")


def superop_dim(s) -> int:
    n = s.shape[0]
    d = math.isqrt(n)
    if s.ndim != 2 or s.shape[1] != n or d * d != n:
        raise DimensionMismatch(f"not a superoperator shape: {s.shape}")
    return d


def apply_superop(s, op: np.ndarray) -> np.ndarray:
    """Apply ``s`` to the operator ``op`` and return the resulting operator."""
    d = superop_dim(s)
    if op.shape != (d, d):
        raise DimensionMismatch(f"superop on dim {d} applied to shape {op.shape}")
    return devectorize(s @ vectorize(op), d)


# ---------------------------------------------------------------------------
# builders


def _square(op, name="operator") -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {op.shape}")
    return op


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> a X b``."""
    a = _square(a)
    b = _square(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return np.kron(b.T, a)


def spre(a: np.ndarray) -> np.ndarray:
    a = _square(a)
    return np.kron(np.eye(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    b = _square(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i [h, rho]``."""
    h = _square(h, "h")
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def dissipator_superop(v: np.ndarray, gamma: float) -> np.ndarray:
    """Superoperator of ``rho -> gamma (2 v rho v^dag - {v^dag v, rho})``.

    Note the factor 2 on the jump term: the population of the state
    annihilated by ``v`` decays at rate ``2 gamma``.
    """
    v = _square(v, "v")
    if gamma < 0:
        raise ValueError(f"negative rate {gamma}")
    eye = np.eye(v.shape[0])
    vdv = v.conj().T @ v
    return gamma * (2.0 * np.kron(v.conj(), v) - np.kron(eye, vdv) - np.kron(vdv.T, eye))


def superop_commutator(s1, s2):
    """Composition commutator ``s1 s2 - s2 s1``."""
    if s1.shape != s2.shape:
        raise DimensionMismatch(f"{s1.shape} vs {s2.shape}")
    return s1 @ s2 - s2 @ s1


# ---------------------------------------------------------------------------
# matrix exponential

# Pade [13/13] coefficients and the 1-norm bound below which no scaling is
# needed for double-precision backward error (Higham 2005).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def superop_expm(s: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a fixed Pade-13 core."""
    a = np.asarray(s.toarray() if sp.issparse(s) else s, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("superop_expm: non-finite entries")
    n = a.shape[0]
    norm1 = np.linalg.norm(a, 1)
    squarings = max(0, math.ceil(math.log2(norm1 / _THETA13))) if norm1 > 0 else 0
    a = a / 2.0**squarings

    b = _PADE13
    ident = np.eye(n, dtype=complex)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


def expm_apply(s, vec: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """Action ``exp(s) @ vec`` by scaled Taylor series; ``s`` may be sparse.

    Used where forming the full exponential would be wasteful (large Fock
    truncations); agrees with :func:`superop_expm` to roundoff.
    """
    vec = np.asarray(vec, dtype=complex)
    if sp.issparse(s):
        norm1 = float(abs(s).sum(axis=0).max()) if s.nnz else 0.0
    else:
        norm1 = float(np.linalg.norm(s, 1))
    if not math.isfinite(norm1):
        raise NonFiniteError("expm_apply: non-finite entries")
    steps = max(1, math.ceil(norm1))
    out = vec.copy()
    for _ in range(steps):
        term = out.copy()
        acc = out.copy()
        k = 1
        while True:
            term = (s @ term) / (steps * k)
            acc = acc + term
            if np.linalg.norm(term, np.inf) <= tol * max(1.0, np.linalg.norm(acc, np.inf)):
                break
            k += 1
            if k > 200:
                raise NonFiniteError("expm_apply: Taylor series failed to converge")
        out = acc
    return out


# ---------------------------------------------------------------------------
# predicates


def is_hermitian(op: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol)


def is_zero(op, tol: float = 0.0) -> bool:
    if sp.issparse(op):
        return bool(op.nnz == 0 or np.max(np.abs(op.data)) <= tol)
    return bool(np.max(np.abs(op), initial=0.0) <= tol)


def trace_annihilation_error(s) -> float:
    """max over basis X of |Tr s(X)|."""
    d = superop_dim(s)
    dense = s.toarray() if sp.issparse(s) else np.asarray(s)
    # Tr Y = <vec(I), vec(Y)>, so the row vec(I)^T s collects all traces
    traces = vectorize(np.eye(d)) @ dense
    return float(np.max(np.abs(traces)))


def transpose_permutation(d: int) -> np.ndarray:
    """Index map taking ``vec(X)`` to ``vec(X^T)`` under column stacking."""
    idx = np.arange(d * d)
    return idx // d + d * (idx % d)


def hermiticity_preservation_error(s) -> float:
    """max over basis X of |s(X^dag) - s(X)^dag|.

    With ``vec(X^dag) = P conj(vec X)`` for the transpose permutation ``P``,
    the condition reads ``s P = P conj(s)`` entrywise.
    """
    d = superop_dim(s)
    dense = s.toarray() if sp.issparse(s) else np.asarray(s)
    perm = transpose_permutation(d)
    return float(np.max(np.abs(dense[:, perm] - dense.conj()[perm, :])))


def is_trace_annihilating(s, tol: float = 1e-12) -> bool:
    return trace_annihilation_error(s) <= tol


def is_hermiticity_preserving(s, tol: float = 1e-12) -> bool:
    return hermiticity_preservation_error(s) <= tol


def choi_matrix(s) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) s(|i><j|)``."""
    d = superop_dim(s)
    dense = s.toarray() if sp.issparse(s) else np.asarray(s)
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            image = devectorize(dense @ vectorize(unit), d)
            choi[i * d:(i + 1) * d, j * d:(j + 1) * d] = image
    return choi


def superop_norm(s) -> float:
    """Spectral norm of the superoperator matrix."""
    dense = s.toarray() if sp.issparse(s) else s
    return float(np.linalg.norm(dense, 2))


# ---------------------------------------------------------------------------
# density matrices


def expect(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ op)))


def density_report(rho: np.ndarray) -> dict[str, float]:
    """Hermiticity defect, trace defect and smallest eigenvalue of ``rho``."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace_err = float(abs(np.trace(rho) - 1.0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return {"hermiticity": herm, "trace": trace_err, "min_eig": min_eig}


def check_density_matrix(
    rho: np.ndarray,
    tol_p: float | None = None,
    tols: Tolerances = DEFAULT_TOLERANCES,
    hermitian_tol: float | None = None,
    trace_tol: float | None = None,
) -> dict[str, float]:
    """Raise :class:`StateInvariantViolation` unless ``rho`` is a density matrix."""
    tol_p = tols.positivity if tol_p is None else tol_p
    hermitian_tol = tols.hermitian if hermitian_tol is None else hermitian_tol
    trace_tol = tols.trace if trace_tol is None else trace_tol
    rep = density_report(rho)
    if rep["hermiticity"] > hermitian_tol:
        raise StateInvariantViolation(f"hermiticity defect {rep['hermiticity']:.3e} > {hermitian_tol:.1e}")
    if rep["trace"] > trace_tol:
        raise StateInvariantViolation(f"trace defect {rep['trace']:.3e} > {trace_tol:.1e}")
    if rep["min_eig"] < -tol_p:
        raise StateInvariantViolation(f"min eigenvalue {rep['min_eig']:.3e} < -{tol_p:.1e}")
    return rep


def null_steady_state(s, tols: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Trace-one Hermitian kernel element of the generator ``s``.

    Takes the right-singular vector of the smallest singular value,
    hermitizes it and normalizes its trace.

    Raises
    ------
    DegenerateKernel
        If the two smallest singular values are both below
        ``tols.kernel_degeneracy * ||s||``.
    NonNormalizable
        If the kernel vector is traceless.
    """
    dense = np.asarray(s.toarray() if sp.issparse(s) else s, dtype=complex)
    d = superop_dim(dense)
    _, svals, vh = np.linalg.svd(dense)
    scale = svals[0] if svals[0] > 0 else 1.0
    if svals[-2] < tols.kernel_degeneracy * scale:
        raise DegenerateKernel(
            f"two near-zero singular values: {svals[-2]:.3e}, {svals[-1]:.3e} (norm {scale:.3e})"
        )
    rho = devectorize(vh[-1].conj(), d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-12 * np.max(np.abs(rho)):
        raise NonNormalizable("kernel vector has zero trace")
    return rho / tr
