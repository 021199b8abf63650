"""Concrete driven-dissipative models and their closed-form references.

Two families are provided:

* a spin-1/2 with spontaneous decay ``sqrt(2 gamma) sigma_-`` and a driving
  field ``alpha B(t) exp(i phi) + c.c.`` coupled to ``sigma``,
* a damped harmonic oscillator (truncated Fock space) driven by
  ``f(t) cos(psi(t))``, written in the interaction picture of ``omega0 a^dag a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import ConfigError, TruncationTooSmall
from .generator import PhaseProfile, QuasiPeriodicGenerator, build_lindblad_generator
from .liouville import commutator_superop, dissipator_superop, null_steady_state, sprepost, spre, spost
from .operators import (
    IDENTITY_2,
    PAULI,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SPIN_UP,
    destroy,
    fock_dm,
    number,
    pauli_dot,
)

RAMP_KINDS = ("constant", "tanh_ramp", "sinusoid")
SPIN_VARIANTS = ("fast_rotation", "slow_rotation_fast_amplitude")


def _logcosh(x):
    return np.logaddexp(x, -x) - math.log(2.0)


@dataclass(frozen=True)
class RampSpec:
    """Smooth scalar profile ``w(t)``.

    ``constant``: ``w_i``. ``tanh_ramp``: ``a + b tanh((t - t0) / tau)`` going
    from ``w_i`` to ``w_f``. ``sinusoid``: ``a + b sin(t / tau)`` oscillating
    between ``w_i`` and ``w_f``; here ``a = (w_f + w_i) / 2`` and
    ``b = (w_f - w_i) / 2``.
    """

    kind: str = "constant"
    w_i: float = 1.0
    w_f: float | None = None
    t0: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in RAMP_KINDS:
            raise ConfigError(f"unknown ramp kind {self.kind!r}")
        if self.kind != "constant":
            if self.w_f is None:
                raise ConfigError(f"{self.kind} needs w_f")
            if self.tau <= 0:
                raise ConfigError("tau must be positive")

    @property
    def _ab(self) -> tuple[float, float]:
        wf = self.w_i if self.w_f is None else self.w_f
        return 0.5 * (wf + self.w_i), 0.5 * (wf - self.w_i)

    def value(self, t):
        if self.kind == "constant":
            return self.w_i + 0.0 * np.asarray(t, dtype=float)
        a, b = self._ab
        if self.kind == "tanh_ramp":
            return a + b * np.tanh((np.asarray(t, dtype=float) - self.t0) / self.tau)
        return a + b * np.sin(np.asarray(t, dtype=float) / self.tau)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return 0.0 * t
        a, b = self._ab
        if self.kind == "tanh_ramp":
            return (b / self.tau) / np.cosh((t - self.t0) / self.tau) ** 2
        return (b / self.tau) * np.cos(t / self.tau)

    def integral(self, t):
        """``int_0^t w``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.w_i * t
        a, b = self._ab
        if self.kind == "tanh_ramp":
            x = (t - self.t0) / self.tau
            return a * t + b * self.tau * (_logcosh(x) - _logcosh(-self.t0 / self.tau))
        return a * t + b * self.tau * (1.0 - np.cos(t / self.tau))

    @property
    def slow_scale(self) -> float:
        return math.inf if self.kind == "constant" else self.tau

    @property
    def extrema(self) -> tuple[float, float]:
        wf = self.w_i if self.w_f is None else self.w_f
        return min(self.w_i, wf), max(self.w_i, wf)

    def to_profile(self, offset: float = 0.0, label: str | None = None) -> PhaseProfile:
        """Phase ``offset * t + int w`` with ``omega_eff = offset + w``."""
        return PhaseProfile(
            phi=lambda t: float(offset * t + self.integral(t)),
            omega_eff=lambda t: float(offset + self.value(t)),
            omega_eff_dot=lambda t: float(self.derivative(t)),
            label=label or self.kind,
        )


# ---------------------------------------------------------------------------
# spin-1/2


@dataclass(frozen=True)
class SpinScenarioParams:
    """Driven decaying spin. ``ramp`` sets ``omega_eff(t)``."""

    alpha: float
    gamma: float
    variant: str
    ramp: RampSpec
    omega_c: float = 0.0
    theta0: float = 0.0

    def __post_init__(self):
        if self.variant not in SPIN_VARIANTS:
            raise ConfigError(f"unknown spin variant {self.variant!r}")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")


def spin_field(p: SpinScenarioParams, t: float) -> np.ndarray:
    """Complex field vector ``B(t)`` multiplying ``exp(+i phi)``."""
    if p.variant == "fast_rotation":
        return np.array([0.0, 0.5, -0.5j])
    c, s = math.cos(p.omega_c * t), math.sin(p.omega_c * t)
    return np.array([0.0, 0.5 * c, 0.5 * s], dtype=complex)


def spin_field_dot(p: SpinScenarioParams, t: float) -> np.ndarray:
    if p.variant == "fast_rotation":
        return np.zeros(3, dtype=complex)
    c, s = math.cos(p.omega_c * t), math.sin(p.omega_c * t)
    return p.omega_c * np.array([0.0, -0.5 * s, 0.5 * c], dtype=complex)


def build_spin_scenario(p: SpinScenarioParams) -> QuasiPeriodicGenerator:
    """``-i[alpha (B . sigma e^{i phi} + B* . sigma e^{-i phi}), .] + gamma D[sigma_-]``."""
    a = p.alpha
    if p.variant == "fast_rotation":
        b = spin_field(p, 0.0)
        h = {1: a * pauli_dot(b), -1: a * pauli_dot(b.conj()), 0: np.zeros((2, 2), dtype=complex)}
    else:
        w = p.omega_c
        cos_t = (lambda t: 0.5 * a * math.cos(w * t), SIGMA_Y, lambda t: -0.5 * a * w * math.sin(w * t))
        sin_t = (lambda t: 0.5 * a * math.sin(w * t), SIGMA_Z, lambda t: 0.5 * a * w * math.cos(w * t))
        h = {1: [cos_t, sin_t], -1: [cos_t, sin_t], 0: np.zeros((2, 2), dtype=complex)}
    meta = {"model": "spin", "variant": p.variant, "alpha": p.alpha, "gamma": p.gamma, "omega_c": p.omega_c}
    return build_lindblad_generator(
        h, [(SIGMA_MINUS, p.gamma)], p.ramp.to_profile(), theta0=p.theta0, dim=2, meta=meta,
        check_times=(0.0, 1.0),
    )


def _comm_map(a):
    return spre(a) - spost(a)


def _acomm_map(a):
    return spre(a) + spost(a)


def spin_reference_leff(p: SpinScenarioParams, t: float, order: int) -> np.ndarray:
    """Closed-form effective-generator term of the given order (0, 1 or 2).

    Written with the field vector ``B`` and cross products, independent of
    the generic commutator expansion.
    """
    w = p.ramp.to_profile().omega_eff(t)
    a, g = p.alpha, p.gamma
    b, bd = spin_field(p, t), spin_field_dot(p, t)
    bc, bdc = b.conj(), bd.conj()
    if order == 0:
        return dissipator_superop(SIGMA_MINUS, g)
    if order == 1:
        return (2 * a * a / w) * _comm_map(pauli_dot(np.cross(b, bc)))
    if order != 2:
        raise ValueError("order must be 0, 1 or 2")
    e_p = np.array([0.5, 0.5j, 0.0])
    e_m = np.array([0.5, -0.5j, 0.0])
    b0 = np.zeros(3)  # no static field in these models

    def half(u, v, dv):
        # u multiplies exp(+i phi); v = conj partner; dv = d/dt of v
        out = _comm_map(pauli_dot(-4j * a * np.cross(u, np.cross(v, b0))))
        out = out + _comm_map(pauli_dot(2j * np.cross(dv, u)))
        diss = 1j * _acomm_map(pauli_dot(np.cross(u, np.cross(v, np.cross(e_p, e_m)))))
        diss = diss + 4 * sprepost(pauli_dot(np.cross(u, e_m)), pauli_dot(np.cross(e_p, v)))
        diss = diss + 2 * sprepost(pauli_dot(np.cross(u, np.cross(e_m, v))), SIGMA_PLUS)
        diss = diss + 2 * sprepost(SIGMA_MINUS, pauli_dot(np.cross(u, np.cross(e_p, v))))
        return out - 4 * g * diss

    return (a * a / (2 * w * w)) * (half(b, bc, bdc) + half(bc, b, bd))


def spin_slow_rotation_c_matrix(p: SpinScenarioParams, t: float) -> np.ndarray:
    """Coefficients ``C_ij`` (basis ``1, x, y, z``) of the order-2 dissipative
    part ``-gamma (alpha / w)^2 sum_ij C_ij sigma_i . sigma_j`` for the slowly
    rotating field.

    The overall prefactor is ``cos^2(omega_c t) / 2``; it is fixed by matching
    the generic second-order expansion.
    """
    th = p.omega_c * t
    c, s = math.cos(th), math.sin(th)
    c2, cs = c * c, c * s
    return 0.5 * np.array([
        [0, 0, cs, -c2],
        [0, 2 * c2, 1j * c2, 1j * cs],
        [cs, -1j * c2, 0, cs],
        [-c2, -1j * cs, cs, -2 * c2],
    ], dtype=complex)


def spin_slow_rotation_leff2(p: SpinScenarioParams, t: float) -> np.ndarray:
    """``(alpha/w)^2 { -i[(omega_c/2) sigma_x, .] - gamma sum C_ij sigma_i . sigma_j }``."""
    w = p.ramp.to_profile().omega_eff(t)
    cmat = spin_slow_rotation_c_matrix(p, t)
    basis = (IDENTITY_2,) + PAULI
    diss = sum(cmat[i, j] * sprepost(basis[i], basis[j]) for i in range(4) for j in range(4))
    return (p.alpha / w) ** 2 * (commutator_superop(0.5 * p.omega_c * SIGMA_X) - p.gamma * diss)


class SpinSteadyState(NamedTuple):
    rho: np.ndarray
    bloch: np.ndarray


def _bloch_to_rho(v) -> np.ndarray:
    return 0.5 * (IDENTITY_2 + pauli_dot(v))


def spin_reference_steady(p: SpinScenarioParams, t: float = 0.0, omega_eff: float | None = None) -> SpinSteadyState:
    """Closed-form steady state of ``L(0) + L_eff(1)`` at frequency ``omega_eff``.

    fast_rotation: the first-order effective generator is a field along x
    of strength ``Omega = 2 alpha^2 / w`` (``H = -Omega sigma_x / 2``)
    plus decay; slow_rotation_fast_amplitude: the order-1 term vanishes and
    the order-2 Hamiltonian ``(alpha/w)^2 (omega_c / 2) sigma_x`` competes
    with decay. Both reduce to a driven two-level system with Bloch vector
    ``(0, 2 g h, -2 g^2) / (h^2 + 2 g^2)`` for ``H = (h/2) sigma_x``.
    """
    w = p.ramp.to_profile().omega_eff(t) if omega_eff is None else omega_eff
    g = p.gamma
    if p.variant == "fast_rotation":
        h = -2 * p.alpha**2 / w
    else:
        h = (p.alpha / w) ** 2 * p.omega_c
    den = h * h + 2 * g * g
    v = np.array([0.0, 2 * g * h / den, -2 * g * g / den])
    return SpinSteadyState(_bloch_to_rho(v), v)


def spin_reference_micromotion(p: SpinScenarioParams, t: float, theta: float) -> np.ndarray:
    """Closed-form first-order micro-motion exponent ``Omega_(1)(theta + phi(t), t)``."""
    prof = p.ramp.to_profile()
    w = prof.omega_eff(t)
    ph = theta + prof.phi(t)
    if p.variant == "fast_rotation":
        return -1j * (p.alpha / w) * _comm_map(SIGMA_Y * math.sin(ph) - SIGMA_Z * math.cos(ph))
    b = spin_field(p, t).real
    return -2j * (p.alpha * math.sin(ph) / w) * _comm_map(pauli_dot(b))


def spin_initial_state() -> np.ndarray:
    return SPIN_UP.copy()


# ---------------------------------------------------------------------------
# driven damped oscillator


@dataclass(frozen=True)
class OscillatorScenarioParams:
    """Oscillator ``omega0`` driven at instantaneous frequency ``drive_freq(t)``.

    ``drive_amplitude`` is a :class:`RampSpec` for ``f(t)``; a bare float is
    promoted to a constant profile.
    """

    omega0: float
    drive_amplitude: RampSpec | float
    drive_freq: RampSpec
    gamma: float
    fock_dim: int = 30
    theta0: float = 0.0

    def __post_init__(self):
        if not isinstance(self.drive_amplitude, RampSpec):
            object.__setattr__(self, "drive_amplitude", RampSpec("constant", float(self.drive_amplitude)))
        if self.fock_dim < 2:
            raise ConfigError("fock_dim must be >= 2")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")


def build_oscillator_scenario(p: OscillatorScenarioParams) -> QuasiPeriodicGenerator:
    """Interaction-picture generator with fast phase ``omega0 t + psi(t)``.

    ``H^(+-1) = (f/2) a^dag``, ``(f/2) a`` and
    ``H^(0) = (f/2) (a e^{i chi} + a^dag e^{-i chi})`` with
    ``chi = psi - omega0 t``; decay ``gamma D[a]``.
    """
    n = p.fock_dim
    a = destroy(n)
    ad = a.conj().T
    f, nu, w0 = p.drive_amplitude, p.drive_freq, p.omega0

    def chi(t):
        return float(nu.integral(t)) - w0 * t

    def chi_dot(t):
        return float(nu.value(t)) - w0

    def half_f(t):
        return 0.5 * float(f.value(t))

    def half_f_dot(t):
        return 0.5 * float(f.derivative(t))

    def rot(sign):
        return lambda t: half_f(t) * np.exp(sign * 1j * chi(t))

    def rot_dot(sign):
        return lambda t: (half_f_dot(t) + sign * 1j * chi_dot(t) * half_f(t)) * np.exp(sign * 1j * chi(t))

    h = {
        1: [(half_f, ad, half_f_dot)],
        -1: [(half_f, a, half_f_dot)],
        0: [(rot(1), a, rot_dot(1)), (rot(-1), ad, rot_dot(-1))],
    }
    meta = {"model": "oscillator", "omega0": w0, "gamma": p.gamma, "fock_dim": n}
    return build_lindblad_generator(
        h, [(a, p.gamma)], nu.to_profile(offset=w0), theta0=p.theta0, dim=n, meta=meta,
        check_times=(0.0, 1.0),
    )


def oscillator_initial_state(p: OscillatorScenarioParams) -> np.ndarray:
    return fock_dm(p.fock_dim, 0)


def check_fock_truncation(states: np.ndarray, tol: float = DEFAULT_TOLERANCES.fock_tail) -> float:
    """Largest population in the top two Fock levels; raises if above ``tol``."""
    tail = float(np.max(np.real(np.einsum("tii->ti", states)[:, -2:])))
    if tail > tol:
        raise TruncationTooSmall(f"top Fock populations reach {tail:.2e} > {tol:.1e}")
    return tail


def driven_damped_occupation(f: float, detuning: float, gamma: float) -> float:
    """Steady-state ``<a^dag a>`` of a resonantly approximated driven damped mode."""
    return (0.5 * f) ** 2 / (detuning**2 + gamma**2)


class OscillatorAsymptote(NamedTuple):
    n_ss: float
    amplitude: float
    period: float


def oscillator_reference_asymptote(
    p: OscillatorScenarioParams, tols: Tolerances = DEFAULT_TOLERANCES
) -> OscillatorAsymptote:
    """Late-time mean occupation, residual oscillation amplitude and period.

    The mean follows from the kernel of the rotating-frame generator
    ``-i[Delta a^dag a - (f/2)(a + a^dag), .] + gamma D[a]``; the first-order
    micro-motion displaces the mode by ``|alpha_D| = f / (2 (omega0 + omega_d))``,
    modulating ``<a^dag a>`` by ``2 |alpha_D| |<a>|`` at period ``pi / omega_d``.
    Requires constant drive amplitude and frequency.
    """
    if p.drive_amplitude.kind != "constant" or p.drive_freq.kind != "constant":
        raise ConfigError("asymptote reference needs a constant drive")
    f, wd, w0 = p.drive_amplitude.w_i, p.drive_freq.w_i, p.omega0
    n = p.fock_dim
    a = destroy(n)
    ad = a.conj().T
    delta = wd - w0
    h_c = delta * number(n) - 0.5 * f * (a + ad)
    rho = null_steady_state(commutator_superop(h_c) + dissipator_superop(a, p.gamma), tols)
    n_ss = float(np.real(np.trace(rho @ number(n))))
    eta = abs(np.trace(rho @ a))
    alpha_d = f / (2 * (w0 + wd))
    return OscillatorAsymptote(n_ss, 2 * alpha_d * eta, math.pi / wd)


def oscillator_displacement(p: OscillatorScenarioParams, t: float, theta: float) -> np.ndarray:
    """Closed-form first-order micro-motion as a superoperator ``X -> U X U^dag``.

    ``U = exp(beta a^dag - beta* a)`` with ``beta = -f e^{i (theta + phi)} / (2 omega_eff)``.
    """
    from scipy.linalg import expm

    prof = p.drive_freq.to_profile(offset=p.omega0)
    beta = -float(p.drive_amplitude.value(t)) * np.exp(1j * (theta + prof.phi(t))) / (2 * prof.omega_eff(t))
    a = destroy(p.fock_dim)
    u = expm(beta * a.conj().T - np.conj(beta) * a)
    return sprepost(u, u.conj().T)


# ---------------------------------------------------------------------------
# step-size guidance


def micromotion_bound_spin(p: SpinScenarioParams, t: float = 0.0) -> float:
    """Bound on ``|<sigma>|`` micro-motion: ``2 alpha |B| / omega_eff``."""
    w = p.ramp.to_profile().omega_eff(t)
    return 2 * p.alpha * float(np.linalg.norm(spin_field(p, t))) / w


def effective_max_step(gamma: float, slow_scale: float = math.inf, detuning: float = 0.0) -> float:
    """Slow-integration step ``min(0.01 / gamma, 0.01 tau_slow, 2 pi / (40 |Delta|))``."""
    cands = [0.01 * slow_scale]
    if gamma > 0:
        cands.append(0.01 / gamma)
    if detuning:
        cands.append(2 * math.pi / (40 * abs(detuning)))
    step = min(cands)
    return step if math.isfinite(step) else 1.0
