"""High-frequency expansion of the generalized Floquet factorization.

For ``L(t) = sum_n L^(n)(t) exp(i n (theta + phi(t)))`` the propagator factorizes as

    Lambda(t, 0) = D(theta + phi(t), t) Lambda_eff(t, 0) D(theta, 0)^-1,

with ``D = exp(Omega)``, ``Omega(theta, t) = sum_{n != 0} Omega^(n)(t) exp(i n theta)``
and a slow effective generator ``L_eff(t)``. Both are expanded in powers of
``1 / omega_eff``; this module evaluates the expansion through second order.

Every closed-form term is written once against a tiny element protocol
(addition, scalar multiplication and :func:`_comm`). Elements are either
dense superoperators or :class:`_Expr` linear combinations of nested
commutators of the generator's fixed term operators, whose matrices are
computed once and cached. The second form keeps repeated evaluation along a
trajectory cheap for large truncated Fock spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import NonFiniteError, ShapeMismatch
from .generator import ComponentStack, QuasiPeriodicGenerator, eval_derivative, _normalize_hamiltonian, _hamiltonian_at
from .liouville import (
    devectorize,
    expm_apply,
    null_steady_state,
    sprepost,
    spre,
    spost,
    superop_expm,
    vectorize,
)
from .propagation import IntegratorConfig, Trajectory, rk4_integrate, _check_states, _observable_series

MAX_ORDER = 2


# ---------------------------------------------------------------------------
# element algebra


class _Algebra:
    """Cache of nested-commutator matrices over a fixed list of operators."""

    def __init__(self, kernels: Sequence):
        self.kernels = list(kernels)
        self.sparse = any(sp.issparse(k) for k in self.kernels)
        self._cache: dict = {}

    def matrix(self, key):
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(key) == 1:
            mat = self.kernels[key[0]]
        else:
            a, b = self.matrix(key[0]), self.matrix(key[1])
            mat = a @ b - b @ a
            if sp.issparse(mat):
                mat = mat.tocsr()
                mat.eliminate_zeros()
        self._cache[key] = mat
        return mat


def _canon(k1, k2):
    """Order a commutator key pair; returns (key, sign) or None when k1 == k2."""
    if k1 == k2:
        return None
    s1, s2 = repr(k1), repr(k2)
    return ((k1, k2), 1.0) if s1 < s2 else ((k2, k1), -1.0)


class _Expr:
    """Linear combination ``sum c_key [nested commutator]``."""

    __slots__ = ("alg", "c")

    def __init__(self, alg: _Algebra, coeffs: dict | None = None):
        self.alg = alg
        self.c = coeffs or {}

    @classmethod
    def leaf(cls, alg, index: int, coeff: complex = 1.0):
        return cls(alg, {(index,): complex(coeff)})

    def _combine(self, other, sign):
        out = dict(self.c)
        for k, v in other.c.items():
            out[k] = out.get(k, 0.0) + sign * v
        return _Expr(self.alg, out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, s):
        return _Expr(self.alg, {k: v * s for k, v in self.c.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_matrix(self, dense: bool = True):
        d2 = self.alg.kernels[0].shape[0] if self.alg.kernels else 0
        acc = None
        for k, v in self.c.items():
            if v == 0:
                continue
            m = self.alg.matrix(k) * v
            acc = m if acc is None else acc + m
        if acc is None:
            acc = np.zeros((d2, d2), dtype=complex)
        if dense and sp.issparse(acc):
            acc = acc.toarray()
        return acc

    def apply(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for k, v in self.c.items():
            if v != 0:
                out += v * (self.alg.matrix(k) @ y)
        return out


def _comm(a, b):
    if isinstance(a, _Expr):
        out: dict = {}
        for ka, va in a.c.items():
            for kb, vb in b.c.items():
                canon = _canon(ka, kb)
                if canon is None:
                    continue
                key, sign = canon
                out[key] = out.get(key, 0.0) + sign * va * vb
        return _Expr(a.alg, out)
    return a @ b - b @ a


def _zero_like(x):
    return _Expr(x.alg) if isinstance(x, _Expr) else np.zeros_like(x)


# ---------------------------------------------------------------------------
# closed-form terms, written against the element protocol


def _leff_order1(L: Mapping[int, object], omega: float):
    acc = _zero_like(L[0])
    for n in L:
        if n != 0 and -n in L:
            acc = acc + _comm(L[-n], L[n]) * (1.0 / (2j * n))
    return acc * (1.0 / omega)


def _leff_order2(L: Mapping[int, object], dL: Mapping[int, object], omega: float):
    acc = _zero_like(L[0])
    nonzero = [n for n in L if n != 0]
    for n in nonzero:
        if -n not in L:
            continue
        acc = acc + _comm(L[n], dL[-n]) * (1.0 / (2 * n * n))
        acc = acc + _comm(L[n], _comm(L[-n], L[0])) * (1.0 / (6 * n * n))
    for m in nonzero:
        for n in nonzero:
            k = -m - n
            if k not in L:
                continue
            acc = acc - _comm(L[m], _comm(L[n], L[k])) * (1.0 / (3 * m * n))
    return acc * (1.0 / omega**2)


def _omega_order1(L: Mapping[int, object], omega: float) -> dict[int, object]:
    return {n: L[n] * (-1j / (omega * n)) for n in L if n != 0}


def _omega_order2(L, dL, omega: float, omega_dot: float) -> dict[int, object]:
    nonzero = [n for n in L if n != 0]
    top = 2 * max((abs(n) for n in L), default=0)
    out = {}
    for n in range(-top, top + 1):
        if n == 0:
            continue
        acc = _zero_like(L[0])
        if n in L:
            acc = acc + _comm(L[0], L[n]) * (1.0 / (2 * n * n))
            acc = acc - (dL[n] - L[n] * (omega_dot / omega)) * (1.0 / (n * n))
        for m in nonzero:
            if n - m in L:
                acc = acc + _comm(L[n - m], L[m]) * (1.0 / (2 * m * n))
        out[n] = acc * (-1.0 / omega**2)
    return out


# ---------------------------------------------------------------------------
# evaluation context


class _Expansion:
    """Evaluates generator components at ``t`` as expansion elements."""

    def __init__(self, g: QuasiPeriodicGenerator, tols: Tolerances = DEFAULT_TOLERANCES):
        self.g = g
        self.tols = tols
        self.stack = ComponentStack(g)
        self.structured = not self.stack.dynamic
        self.alg = _Algebra(self.stack.kernels) if self.structured else None

    def components(self, t: float) -> dict[int, object]:
        if not self.structured:
            return {n: self.g.component(n, t) for n in self.g.harmonics}
        out = {n: _Expr(self.alg) for n in self.g.harmonics}
        for term, n, u in zip(self.stack.terms, self.stack.term_n, self.stack.term_op):
            out[n] = out[n] + _Expr.leaf(self.alg, u, term.c(t))
        return out

    def derivatives(self, t: float) -> dict[int, object]:
        if not self.structured:
            return {n: eval_derivative(self.g, n, t, self.tols) for n in self.g.harmonics}
        h = self.g.fd_step(t, self.tols)
        out = {n: _Expr(self.alg) for n in self.g.harmonics}
        for term, n, u in zip(self.stack.terms, self.stack.term_n, self.stack.term_op):
            cd = term.c_dot(t)
            if cd is None:
                cd = (term.c(t + h) - term.c(t - h)) / (2 * h)
            out[n] = out[n] + _Expr.leaf(self.alg, u, cd)
        return out

    def leff_terms(self, t: float, order: int) -> list:
        """Elements ``[L_eff(0), ..., L_eff(order)]`` at time ``t``."""
        _check_order(order, allow_zero=True)
        L = self.components(t)
        omega = self.g.phase.omega_eff(t)
        terms = [L[0]]
        if order >= 1:
            terms.append(_leff_order1(L, omega))
        if order >= 2:
            terms.append(_leff_order2(L, self.derivatives(t), omega))
        return terms

    def leff(self, t: float, order: int):
        terms = self.leff_terms(t, order)
        acc = terms[0]
        for extra in terms[1:]:
            acc = acc + extra
        return acc

    def omega(self, t: float, order: int) -> dict[int, object]:
        _check_order(order)
        L = self.components(t)
        w = self.g.phase.omega_eff(t)
        out = _omega_order1(L, w)
        if order >= 2:
            second = _omega_order2(L, self.derivatives(t), w, self.g.phase.omega_eff_dot(t))
            for n, val in second.items():
                out[n] = out[n] + val if n in out else val
        return out

    def micromotion_exponent(self, t: float, theta: float, order: int):
        """``sum_{n != 0} Omega^(n)(t) exp(i n (theta + phi(t)))``."""
        phase = theta + self.g.phase.phi(t)
        parts = self.omega(t, order)
        acc = _zero_like(self.components(t)[0])
        for n, val in parts.items():
            acc = acc + val * np.exp(1j * n * phase)
        return acc


def _check_order(order: int, allow_zero: bool = False) -> None:
    lo = 0 if allow_zero else 1
    if not lo <= order <= MAX_ORDER:
        raise ValueError(f"expansion order must be in [{lo}, {MAX_ORDER}], got {order}")


def _dense(x) -> np.ndarray:
    return x.to_matrix() if isinstance(x, _Expr) else np.asarray(x)


# ---------------------------------------------------------------------------
# public API


def leff_order1_term(g: QuasiPeriodicGenerator, t: float) -> np.ndarray:
    """First-order effective-generator correction ``(1/w) sum_n [L^(-n), L^(n)] / (2 i n)``."""
    return _dense(_Expansion(g).leff_terms(t, 1)[1])


def leff_order2_term(g: QuasiPeriodicGenerator, t: float, tols: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Second-order correction, including the slow-derivative commutators.

    Triple-commutator sums run over all declared harmonics with undeclared
    ones treated as zero; the ``m + n = 0`` terms of the double sum are kept.
    """
    return _dense(_Expansion(g, tols).leff_terms(t, 2)[2])


def omega_components(
    g: QuasiPeriodicGenerator, t: float, order: int, tols: Tolerances = DEFAULT_TOLERANCES
) -> dict[int, np.ndarray]:
    """Micro-motion generator harmonics ``Omega^(n)(t)`` summed through ``order``.

    ``Omega^(0)`` is identically zero (the gauge that fixes ``L_eff``) and is
    included in the result as an explicit zero block.
    """
    parts = _Expansion(g, tols).omega(t, order)
    out = {n: _dense(v) for n, v in parts.items()}
    out[0] = np.zeros((g.d2, g.d2), dtype=complex)
    return out


def micromotion_generator(
    g: QuasiPeriodicGenerator, t: float, theta: float, order: int, tols: Tolerances = DEFAULT_TOLERANCES
) -> np.ndarray:
    return _dense(_Expansion(g, tols).micromotion_exponent(t, theta, order))


def micromotion_superop(
    g: QuasiPeriodicGenerator, t: float, theta: float, order: int = 1, tols: Tolerances = DEFAULT_TOLERANCES
) -> np.ndarray:
    """``D(theta + phi(t), t) = exp(sum_n Omega^(n)(t) exp(i n (theta + phi(t))))``."""
    return superop_expm(micromotion_generator(g, t, theta, order, tols))


@dataclass
class EffectiveGenerator:
    """Truncated effective generator ``L_eff(t) = sum_{k <= order} L_eff(k)(t)``."""

    source: QuasiPeriodicGenerator
    order: int
    tols: Tolerances = DEFAULT_TOLERANCES
    _exp: _Expansion = field(init=False, repr=False)
    _memo: dict = field(init=False, repr=False)

    def __post_init__(self):
        _check_order(self.order, allow_zero=True)
        self._exp = _Expansion(self.source, self.tols)
        self._memo: dict = {}

    def eval(self, t: float) -> np.ndarray:
        return _dense(self._exp.leff(t, self.order))

    def terms(self, t: float) -> list[np.ndarray]:
        return [_dense(x) for x in self._exp.leff_terms(t, self.order)]

    def operator(self, t: float):
        """``L_eff(t)`` as a dense matrix, or an expression for sparse generators.

        The last few evaluations are memoized; RK4 revisits stage times.
        """
        hit = self._memo.get(t)
        if hit is None:
            x = self._exp.leff(t, self.order)
            if isinstance(x, _Expr) and not self._exp.alg.sparse:
                x = x.to_matrix()
            if len(self._memo) >= 4:
                self._memo.pop(next(iter(self._memo)))
            hit = self._memo[t] = x
        return hit

    def apply(self, t: float, y: np.ndarray) -> np.ndarray:
        x = self.operator(t)
        return x.apply(y) if isinstance(x, _Expr) else x @ y

    def micromotion_apply(self, t: float, theta: float, order: int, y: np.ndarray, inverse: bool = False):
        """``D^{+-1}(theta + phi(t), t) @ y``."""
        x = self._exp.micromotion_exponent(t, theta, order)
        if inverse:
            x = -x
        if isinstance(x, _Expr) and self._exp.alg.sparse:
            out = expm_apply(x.to_matrix(dense=False), y)
        else:
            out = superop_expm(_dense(x)) @ y
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("micro-motion map produced non-finite values")
        return out


def instantaneous_steady_state(eg: EffectiveGenerator, t: float) -> np.ndarray:
    """Trace-one kernel element of ``L_eff(t)``."""
    return null_steady_state(eg.eval(t), eg.tols)


def propagate_effective(
    g: QuasiPeriodicGenerator,
    rho0: np.ndarray,
    cfg: IntegratorConfig,
    order: int,
    with_micromotion: bool = False,
    micromotion_order: int = 1,
    observables: Mapping[str, np.ndarray] | None = None,
    tols: Tolerances = DEFAULT_TOLERANCES,
    check: bool = True,
) -> Trajectory:
    """Slow propagation under ``L_eff``, optionally dressed with the micro-motion.

    The RK4 step is bounded by ``cfg.max_step`` only (slow scales); the fast
    period does not enter. With ``with_micromotion`` the output is
    ``D(theta0 + phi(t), t) Lambda_eff(t, 0) D(theta0, 0)^-1 rho0``.
    """
    eg = EffectiveGenerator(g, order, tols)
    y0 = vectorize(np.asarray(rho0, dtype=complex)).copy()
    if with_micromotion:
        y0 = eg.micromotion_apply(0.0, g.theta0, micromotion_order, y0, inverse=True)

    def bound(a, b):
        return cfg.max_step

    states = np.empty((len(cfg.t_grid), g.dim, g.dim), dtype=complex)
    for k, (t, y) in enumerate(rk4_integrate(eg.apply, y0, 0.0, cfg.t_grid, bound, cfg.step)):
        if with_micromotion:
            y = eg.micromotion_apply(t, g.theta0, micromotion_order, y)
        states[k] = devectorize(y, g.dim)
    tag = f"effective_micromotion({order})" if with_micromotion else f"effective({order})"
    if check:
        _check_states(states, tag, tols.positivity_effective, tols, tols.trajectory_trace,
                      tols.trajectory_hermitian)
    meta = {"order": order, "max_step": cfg.max_step}
    if with_micromotion:
        meta["micromotion_order"] = micromotion_order
    return Trajectory(np.array(cfg.t_grid), states, tag, _observable_series(states, observables), meta)


# ---------------------------------------------------------------------------
# specialized single-jump Lindblad form


def _c(a, b):
    return a @ b - b @ a


def _ac(a, b):
    return a @ b + b @ a


def leff_lindblad_specialized(
    h_harmonics: Mapping[int, object],
    jumps: Sequence[tuple[np.ndarray, float]],
    g: QuasiPeriodicGenerator,
    t: float,
    h_derivatives: Mapping[int, object] | None = None,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """``L_eff(1) + L_eff(2)`` written out for ``-i[H, .] + gamma D[X]`` generators.

    Operator-level expression for Hamiltonians with harmonics in {-1, 0, 1}
    and a single static jump ``X_- = X``, ``X_+ = X^dag``:

    * order 1: ``(1 / i w) [[H1, H-1], .]``
    * order 2: ``(1 / 2 w^2) sum_{n = +-1} { [[dH-n, Hn], .] + i [[Hn, [H-n, H0]], .]
      + gamma ( {[Hn, [H-n, X+ X-]], .} + 2 [Hn, X-] . [X+, H-n]
      + 2 [H-n, X-] . [X+, Hn] + 2 [Hn, [X-, H-n]] . X+ + 2 X- . [Hn, [X+, H-n]] ) }``

    ``h_harmonics`` accepts the same forms as
    :func:`floqgen.generator.build_lindblad_generator`; derivatives come from
    ``h_derivatives`` (callables), analytic term derivatives, or a central
    difference.
    """
    keys = set(h_harmonics)
    if not keys <= {-1, 0, 1}:
        raise ShapeMismatch(f"harmonics {sorted(keys)} outside {{-1, 0, 1}}")
    if len(jumps) > 1:
        raise ShapeMismatch(f"{len(jumps)} jump channels; the closed form needs exactly one")
    h_derivatives = h_derivatives or {}
    d = g.dim
    norms = {n: _normalize_hamiltonian(spec, h_derivatives.get(n)) for n, spec in h_harmonics.items()}
    step = g.fd_step(t, tols)

    def H(n):
        return _hamiltonian_at(norms[n], t) if n in norms else np.zeros((d, d), dtype=complex)

    def dH(n):
        if n not in norms:
            return np.zeros((d, d), dtype=complex)
        norm = norms[n]
        if norm[0] == "fn" and norm[2] is not None:
            return np.asarray(norm[2](t), dtype=complex)
        if norm[0] == "terms" and all(c is None or cd is not None for c, _, cd in norm[1]):
            return sum((0.0 if c is None else cd(t)) * op for c, op, cd in norm[1])
        return (_hamiltonian_at(norm, t + step) - _hamiltonian_at(norm, t - step)) / (2 * step)

    if jumps:
        xm = np.asarray(jumps[0][0], dtype=complex)
        gamma = float(jumps[0][1])
    else:
        xm = np.zeros((d, d), dtype=complex)
        gamma = 0.0
    xp = xm.conj().T
    w = g.phase.omega_eff(t)
    h0 = H(0)

    def comm_map(a):
        return spre(a) - spost(a)

    def acomm_map(a):
        return spre(a) + spost(a)

    first = comm_map(_c(H(1), H(-1))) / (1j * w)
    second = np.zeros_like(first)
    for n in (-1, 1):
        hn, hm = H(n), H(-n)
        second += comm_map(_c(dH(-n), hn))
        second += 1j * comm_map(_c(hn, _c(hm, h0)))
        diss = acomm_map(_c(hn, _c(hm, xp @ xm)))
        diss += 2 * sprepost(_c(hn, xm), _c(xp, hm))
        diss += 2 * sprepost(_c(hm, xm), _c(xp, hn))
        diss += 2 * sprepost(_c(hn, _c(xm, hm)), xp)
        diss += 2 * sprepost(xm, _c(hn, _c(xp, hm)))
        second += gamma * diss
    return first + second / (2 * w * w)
