"""Quasi-periodic Lindblad generators.

A generator is stored by its Fourier components in the fast phase,

    L(t) = sum_n L^(n)(t) exp(i n (theta0 + phi(t))),

where ``phi`` is the accumulated fast phase and the components carry the slow
time dependence. A component is either a sum of :class:`Term` objects (a
scalar coefficient function times a fixed superoperator) or an opaque callable.
The term form is what the propagators and the high-frequency expansion use to
avoid re-assembling large superoperators at every substep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import MissingComponent, PairingViolation
from .liouville import commutator_superop, dissipator_superop, transpose_permutation

ScalarFn = Callable[[float], complex]
SuperOpFn = Callable[[float], np.ndarray]


# ---------------------------------------------------------------------------
# fast phase


@dataclass(frozen=True)
class PhaseProfile:
    """Fast phase ``phi(t)`` with ``phi(0) = 0`` and its first two derivatives."""

    phi: Callable[[float], float]
    omega_eff: Callable[[float], float]
    omega_eff_dot: Callable[[float], float]
    label: str = "custom"

    @classmethod
    def constant(cls, omega: float) -> "PhaseProfile":
        if omega <= 0:
            raise ValueError("frequency must be positive")
        return cls(
            phi=lambda t: omega * t,
            omega_eff=lambda t: omega,
            omega_eff_dot=lambda t: 0.0,
            label=f"constant({omega})",
        )

    @classmethod
    def from_frequency(
        cls,
        omega_eff: Callable[[float], float],
        t_end: float,
        omega_eff_dot: Callable[[float], float] | None = None,
        nodes_per_unit: int = 64,
    ) -> "PhaseProfile":
        """Accumulate ``phi = int_0^t omega_eff`` when no closed form is known.

        The integral is tabulated with composite Simpson sums and interpolated
        with a cubic Hermite spline that uses the exact derivative
        ``omega_eff`` at the nodes.
        """
        n = max(64, int(math.ceil(t_end * nodes_per_unit)))
        n += n % 2
        grid = np.linspace(0.0, t_end, n + 1)
        w = np.array([omega_eff(t) for t in grid])
        mids = np.array([omega_eff(0.5 * (a + b)) for a, b in zip(grid[:-1], grid[1:])])
        h = grid[1] - grid[0]
        increments = h / 6.0 * (w[:-1] + 4.0 * mids + w[1:])
        phi_nodes = np.concatenate([[0.0], np.cumsum(increments)])
        spline = CubicHermiteSpline(grid, phi_nodes, w)
        if omega_eff_dot is None:
            def omega_eff_dot(t, _f=omega_eff):
                dt = 1e-5
                return (_f(t + dt) - _f(t - dt)) / (2 * dt)
        return cls(phi=lambda t: float(spline(t)), omega_eff=omega_eff, omega_eff_dot=omega_eff_dot,
                   label="numerical")

    def max_omega(self, a: float, b: float, samples: int = 9) -> float:
        return max(self.omega_eff(t) for t in np.linspace(a, b, samples))

    def consistency_error(self, times: Sequence[float], rel_step: float = 1e-4) -> float:
        """Largest relative gap between a central difference of ``phi`` and ``omega_eff``."""
        worst = 0.0
        for t in times:
            w = self.omega_eff(t)
            dt = rel_step / w
            fd = (self.phi(t + dt) - self.phi(t - dt)) / (2 * dt)
            worst = max(worst, abs(fd - w) / abs(w))
        return worst


# ---------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class Term:
    """``coeff(t) * op`` with ``op`` a fixed superoperator.

    ``coeff=None`` means the constant 1. ``coeff_dot`` is the analytic time
    derivative of the coefficient; leave it ``None`` to fall back to finite
    differences (constant terms are always differentiated exactly).
    """

    op: np.ndarray
    coeff: ScalarFn | None = None
    coeff_dot: ScalarFn | None = None

    def c(self, t: float) -> complex:
        return 1.0 if self.coeff is None else self.coeff(t)

    @property
    def has_analytic_derivative(self) -> bool:
        return self.coeff is None or self.coeff_dot is not None

    def c_dot(self, t: float) -> complex | None:
        if self.coeff is None:
            return 0.0
        if self.coeff_dot is None:
            return None
        return self.coeff_dot(t)


@dataclass(frozen=True)
class HarmonicComponent:
    """Fourier component ``L^(n)(t)`` of the generator."""

    n: int
    terms: tuple[Term, ...] = ()
    fn: SuperOpFn | None = None
    dfn: SuperOpFn | None = None

    def __post_init__(self):
        if self.fn is not None and self.terms:
            raise ValueError("give either terms or fn, not both")

    @property
    def structured(self) -> bool:
        return self.fn is None

    @property
    def has_analytic_derivative(self) -> bool:
        if self.fn is not None:
            return self.dfn is not None
        return all(term.has_analytic_derivative for term in self.terms)

    def value(self, t: float, d2: int) -> np.ndarray:
        if self.fn is not None:
            return np.asarray(self.fn(t), dtype=complex)
        out = np.zeros((d2, d2), dtype=complex)
        for term in self.terms:
            out += term.c(t) * term.op
        return out

    def analytic_derivative(self, t: float, d2: int) -> np.ndarray | None:
        if not self.has_analytic_derivative:
            return None
        if self.fn is not None:
            return np.asarray(self.dfn(t), dtype=complex)
        out = np.zeros((d2, d2), dtype=complex)
        for term in self.terms:
            out += term.c_dot(t) * term.op
        return out


@dataclass(frozen=True)
class QuasiPeriodicGenerator:
    """``L(t) = sum_n L^(n)(t) exp(i n (theta0 + phi(t)))`` on a ``dim``-level system."""

    dim: int
    components: Mapping[int, HarmonicComponent]
    phase: PhaseProfile
    theta0: float = 0.0
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        keys = set(self.components)
        if keys != {-k for k in keys}:
            raise PairingViolation(f"harmonic set {sorted(keys)} is not closed under n -> -n")
        for n, comp in self.components.items():
            if comp.n != n:
                raise ValueError(f"component stored under {n} has index {comp.n}")

    @property
    def harmonics(self) -> tuple[int, ...]:
        return tuple(sorted(self.components))

    @property
    def d2(self) -> int:
        return self.dim * self.dim

    def component(self, n: int, t: float) -> np.ndarray:
        """``L^(n)(t)``; zero for undeclared harmonics."""
        comp = self.components.get(n)
        if comp is None:
            return np.zeros((self.d2, self.d2), dtype=complex)
        return comp.value(t, self.d2)

    def fd_step(self, t: float, tols: Tolerances = DEFAULT_TOLERANCES) -> float:
        return min(tols.fd_max_step, tols.fd_period_fraction / self.phase.omega_eff(t))


def eval_at_phase(g: QuasiPeriodicGenerator, theta_val: float, t: float) -> np.ndarray:
    """Assemble ``sum_n L^(n)(t) exp(i n theta_val)``."""
    out = np.zeros((g.d2, g.d2), dtype=complex)
    for n, comp in g.components.items():
        out += comp.value(t, g.d2) * np.exp(1j * n * theta_val)
    return out


def eval_generator(g: QuasiPeriodicGenerator, t: float) -> np.ndarray:
    """The physical generator ``L(t)`` at phase ``theta0 + phi(t)``."""
    return eval_at_phase(g, g.theta0 + g.phase.phi(t), t)


def eval_derivative(
    g: QuasiPeriodicGenerator, n: int, t: float, tols: Tolerances = DEFAULT_TOLERANCES,
    force_fd: bool = False,
) -> np.ndarray:
    """``d/dt L^(n)(t)``: analytic when attached, else a central difference."""
    comp = g.components.get(n)
    if comp is None:
        raise MissingComponent(n)
    if not force_fd:
        exact = comp.analytic_derivative(t, g.d2)
        if exact is not None:
            return exact
    h = g.fd_step(t, tols)
    return (comp.value(t + h, g.d2) - comp.value(t - h, g.d2)) / (2 * h)


def conjugation_pairing_error(g: QuasiPeriodicGenerator, t: float) -> float:
    """max_n max_X |L^(-n)(X^dag) - (L^(n)(X))^dag| over a full operator basis.

    Uses ``vec(X^dag) = P conj(vec X)`` with ``P`` the transpose permutation,
    so the condition is ``L^(-n) P = P conj(L^(n))`` entrywise.
    """
    perm = transpose_permutation(g.dim)
    worst = 0.0
    for n in g.harmonics:
        plus = g.component(n, t)
        minus = g.component(-n, t)
        worst = max(worst, float(np.max(np.abs(minus[:, perm] - plus.conj()[perm, :]))))
    return worst


# ---------------------------------------------------------------------------
# Lindblad builder

HamiltonianSpec = object  # callable t -> Operator, constant Operator, or sequence of term tuples


def _normalize_hamiltonian(spec, derivative=None):
    """Return ('terms', [(coeff, op, coeff_dot)]) or ('fn', fn, dfn)."""
    if callable(spec):
        return "fn", spec, derivative
    if isinstance(spec, np.ndarray):
        return "terms", [(None, np.asarray(spec, dtype=complex), None)]
    out = []
    for item in spec:
        if isinstance(item, np.ndarray):
            out.append((None, np.asarray(item, dtype=complex), None))
            continue
        coeff, op, *rest = item
        out.append((coeff, np.asarray(op, dtype=complex), rest[0] if rest else None))
    return "terms", out


def _hamiltonian_at(norm, t: float) -> np.ndarray:
    if norm[0] == "fn":
        return np.asarray(norm[1](t), dtype=complex)
    return sum((1.0 if c is None else c(t)) * op for c, op, _ in norm[1])


def build_lindblad_generator(
    h_harmonics: Mapping[int, HamiltonianSpec],
    jumps: Sequence[tuple[np.ndarray, float]],
    phase: PhaseProfile,
    theta0: float = 0.0,
    h_derivatives: Mapping[int, Callable[[float], np.ndarray]] | None = None,
    dim: int | None = None,
    check_times: Sequence[float] = (0.0,),
    meta: Mapping[str, object] | None = None,
) -> QuasiPeriodicGenerator:
    """Quasi-periodic generator ``-i[H(t), .] + sum_k D[v_k, gamma_k]``.

    Each ``h_harmonics[n]`` is one of

    * a constant operator,
    * a sequence of ``(coeff, operator)`` or ``(coeff, operator, coeff_dot)``
      tuples, read as ``sum coeff(t) * operator`` (``coeff=None`` is 1),
    * a callable ``t -> operator`` (derivative optionally in ``h_derivatives``).

    Jump operators are static; their dissipators all sit in the ``n = 0``
    component.
    """
    h_derivatives = h_derivatives or {}
    keys = set(h_harmonics)
    if keys != {-k for k in keys}:
        raise PairingViolation(f"harmonic set {sorted(keys)} is not closed under n -> -n")
    norms = {n: _normalize_hamiltonian(spec, h_derivatives.get(n)) for n, spec in h_harmonics.items()}

    if dim is None:
        probe = [np.asarray(v) for v, _ in jumps]
        probe += [_hamiltonian_at(norm, 0.0) for norm in norms.values()]
        if not probe:
            raise ValueError("cannot infer dimension from an empty generator; pass dim")
        dim = probe[0].shape[0]

    for t in check_times:
        for n, norm in norms.items():
            h_n = _hamiltonian_at(norm, t)
            h_m = _hamiltonian_at(norms[-n], t)
            gap = float(np.max(np.abs(h_m - h_n.conj().T)))
            if gap > 1e-10:
                raise PairingViolation(f"H^({-n}) != H^({n})^dagger at t={t} (gap {gap:.2e})")

    components: dict[int, HarmonicComponent] = {}
    for n, norm in norms.items():
        if norm[0] == "fn":
            fn, dfn = norm[1], norm[2]
            comp_fn = (lambda t, _f=fn: commutator_superop(_f(t)))
            comp_dfn = None if dfn is None else (lambda t, _f=dfn: commutator_superop(_f(t)))
            components[n] = HarmonicComponent(n, fn=comp_fn, dfn=comp_dfn)
        else:
            terms = tuple(Term(commutator_superop(op), c, cd) for c, op, cd in norm[1])
            components[n] = HarmonicComponent(n, terms=terms)

    diss = []
    for v, rate in jumps:
        if rate < 0:
            raise ValueError(f"negative rate {rate}")
        diss.append(Term(dissipator_superop(np.asarray(v, dtype=complex), rate)))
    if diss:
        base = components.get(0)
        if base is None:
            components[0] = HarmonicComponent(0, terms=tuple(diss))
        elif base.structured:
            components[0] = HarmonicComponent(0, terms=base.terms + tuple(diss))
        else:
            static = sum(term.op for term in diss)
            fn, dfn = base.fn, base.dfn
            components[0] = HarmonicComponent(0, fn=lambda t, _f=fn: _f(t) + static, dfn=dfn)
    if 0 not in components:
        components[0] = HarmonicComponent(0, terms=(Term(np.zeros((dim * dim, dim * dim), dtype=complex)),))
    return QuasiPeriodicGenerator(dim, components, phase, theta0, dict(meta or {}))


# ---------------------------------------------------------------------------
# fast application


def _as_kernel(op: np.ndarray):
    """Sparse copy of ``op`` when that pays off, else the dense array."""
    n = op.shape[0]
    if n > 64 and np.count_nonzero(op) < 0.1 * op.size:
        return sp.csr_matrix(op)
    return op


class ComponentStack:
    """Stacked fixed superoperators for fast evaluation of ``sum_n L^(n)(t) x_n``.

    Identical term operators are merged; structured components are applied
    through one stacked (possibly sparse) matrix, opaque ones are evaluated
    densely at every call.
    """

    def __init__(self, g: QuasiPeriodicGenerator):
        self.g = g
        d2 = g.d2
        self.unique: list[np.ndarray] = []
        keys: dict[bytes, int] = {}
        self.term_n: list[int] = []
        self.term_op: list[int] = []
        self.terms: list[Term] = []
        self.dynamic: list[HarmonicComponent] = []
        for n in g.harmonics:
            comp = g.components[n]
            if not comp.structured:
                self.dynamic.append(comp)
                continue
            for term in comp.terms:
                if not np.any(term.op):
                    continue
                key = term.op.tobytes()
                if key not in keys:
                    keys[key] = len(self.unique)
                    self.unique.append(term.op)
                self.terms.append(term)
                self.term_n.append(n)
                self.term_op.append(keys[key])
        self.kernels = [_as_kernel(op) for op in self.unique]
        if self.unique:
            if any(sp.issparse(k) for k in self.kernels):
                self.stacked = sp.vstack([sp.csr_matrix(k) for k in self.kernels]).tocsr()
            else:
                self.stacked = np.vstack(self.unique)
        else:
            self.stacked = None
        self.term_n_arr = np.array(self.term_n, dtype=int)
        self.term_op_arr = np.array(self.term_op, dtype=int)
        self.harm_list = sorted(set(self.term_n))
        self.term_h_arr = np.array([self.harm_list.index(n) for n in self.term_n], dtype=int)
        self.d2 = d2

    def coefficients(self, t: float) -> np.ndarray:
        return np.array([term.c(t) for term in self.terms], dtype=complex)

    def apply(self, t: float, y: np.ndarray, theta: float) -> np.ndarray:
        """``L~(theta, t) @ y`` for the assembled generator."""
        out = np.zeros(self.d2, dtype=complex)
        if self.terms:
            z = (self.stacked @ y).reshape(len(self.unique), self.d2)
            kappa = self.coefficients(t) * np.exp(1j * self.term_n_arr * theta)
            out += kappa @ z[self.term_op_arr]
        for comp in self.dynamic:
            out += np.exp(1j * comp.n * theta) * (comp.value(t, self.d2) @ y)
        return out

    def apply_blocks(self, t: float, blocks: np.ndarray) -> np.ndarray:
        """Extended-space convolution ``out[n] = sum_m L^(n-m)(t) blocks[m]``.

        ``blocks`` has shape ``(2 N + 1, d**2)`` indexed by ``m + N``; blocks
        shifted outside the window are dropped.
        """
        nb = blocks.shape[0]
        nmax = (nb - 1) // 2
        out = np.zeros_like(blocks)
        if self.terms:
            z = np.asarray(self.stacked @ blocks.T).reshape(len(self.unique), self.d2, nb)
            cmat = np.zeros((len(self.harm_list), len(self.unique)), dtype=complex)
            np.add.at(cmat, (self.term_h_arr, self.term_op_arr), self.coefficients(t))
            w = (cmat @ z.reshape(len(self.unique), -1)).reshape(len(self.harm_list), self.d2, nb)
            out_t = np.zeros((self.d2, nb), dtype=complex)
            for i, k in enumerate(self.harm_list):
                if abs(k) >= nb:
                    continue
                if k >= 0:
                    out_t[:, k:] += w[i][:, : nb - k]
                else:
                    out_t[:, : nb + k] += w[i][:, -k:]
            out += out_t.T
        for comp in self.dynamic:
            z = blocks @ comp.value(t, self.d2).T
            _shift_add(out, z, 1.0, comp.n, nmax)
        return out


def _shift_add(out: np.ndarray, z: np.ndarray, c: complex, k: int, nmax: int) -> None:
    """``out[n] += c * z[n - k]`` over the truncated index window."""
    nb = 2 * nmax + 1
    if abs(k) >= nb:
        return
    if k >= 0:
        out[k:] += c * z[: nb - k]
    else:
        out[: nb + k] += c * z[-k:]
