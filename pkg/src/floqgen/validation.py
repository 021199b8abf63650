"""Invariant and oracle suite behind ``floqgen validate``.

Each check returns a measured value and the bound it must respect; the
suite is deterministic (fixed seed) and takes well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .generator import conjugation_pairing_error, eval_derivative
from .hf import (
    EffectiveGenerator,
    leff_lindblad_specialized,
    leff_order1_term,
    leff_order2_term,
    micromotion_superop,
    omega_components,
)
from .liouville import (
    commutator_superop,
    density_report,
    dissipator_superop,
    hermiticity_preservation_error,
    superop_expm,
    trace_annihilation_error,
)
from .operators import SIGMA_MINUS, SPIN_UP, fock_dm
from .propagation import IntegratorConfig, composition_check, propagate_exact, propagate_extended
from .scenarios import (
    OscillatorScenarioParams,
    RampSpec,
    SpinScenarioParams,
    build_oscillator_scenario,
    build_spin_scenario,
    spin_reference_leff,
    spin_reference_micromotion,
    spin_slow_rotation_leff2,
)


@dataclass
class CheckResult:
    name: str
    value: float
    bound: float
    comparison: str = "<="

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.bound if self.comparison == "<=" else self.value >= self.bound

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<58s} {self.value: .3e} {self.comparison} {self.bound:.1e}"


def _rand_op(rng, d, hermitian=False):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T if hermitian else a


def _random_lindblad(rng, d=3):
    return commutator_superop(_rand_op(rng, d, True)) + dissipator_superop(_rand_op(rng, d), 0.3)


def _spin_draw(rng, variant):
    ramp = RampSpec("tanh_ramp", rng.uniform(1.5, 3.0), rng.uniform(3.0, 6.0), rng.uniform(0, 50), rng.uniform(2, 20))
    return SpinScenarioParams(rng.uniform(0.1, 1.0), rng.uniform(0.0, 0.3), variant, ramp,
                              omega_c=rng.uniform(0.05, 0.5))


def _spin_h(p):
    from .scenarios import spin_field, spin_field_dot
    from .operators import pauli_dot

    def h(sign):
        def fn(t):
            b = spin_field(p, t)
            return p.alpha * pauli_dot(b if sign > 0 else b.conj())
        return fn

    def dh(sign):
        def fn(t):
            b = spin_field_dot(p, t)
            return p.alpha * pauli_dot(b if sign > 0 else b.conj())
        return fn

    return {1: h(1), -1: h(-1), 0: lambda t: np.zeros((2, 2), dtype=complex)}, {1: dh(1), -1: dh(-1)}


def check_liouville(tols: Tolerances, rng) -> list[CheckResult]:
    worst_tr = worst_h = worst_exp = 0.0
    for _ in range(10):
        s = _random_lindblad(rng)
        worst_tr = max(worst_tr, trace_annihilation_error(s))
        worst_h = max(worst_h, hermiticity_preservation_error(s))
        a = 0.5 * s / max(1.0, np.linalg.norm(s, 2))
        worst_exp = max(worst_exp, float(np.max(np.abs(superop_expm(a) @ superop_expm(-a) - np.eye(len(a))))))
    return [
        CheckResult("liouville: Lindblad superops are trace-annihilating", worst_tr, tols.trace),
        CheckResult("liouville: Lindblad superops preserve Hermiticity", worst_h, tols.hermitian),
        CheckResult("liouville: exp(S) exp(-S) = 1", worst_exp, tols.expm_residual),
    ]


def check_generators(tols: Tolerances, rng) -> list[CheckResult]:
    spin = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("tanh_ramp", 1.5, 3.5, 80, 10)))
    osc_p = OscillatorScenarioParams(1.0, RampSpec("tanh_ramp", 0.03, 0.05, 20, 5),
                                     RampSpec("tanh_ramp", 1.0, 1.06, 20, 5), 0.01, fock_dim=12)
    osc = build_oscillator_scenario(osc_p)
    times = np.linspace(0, 60, 13)
    pair = max(conjugation_pairing_error(g, t) for g in (spin, osc) for t in times)
    phase = max(g.phase.consistency_error(times) for g in (spin, osc))
    fd = 0.0
    for n in osc.harmonics:
        # relative to the peak derivative over the window; pointwise ratios
        # are meaningless where the ramp has flattened out
        ana = np.array([eval_derivative(osc, n, t, tols) for t in times])
        num = np.array([eval_derivative(osc, n, t, tols, force_fd=True) for t in times])
        fd = max(fd, float(np.max(np.abs(ana - num)) / np.max(np.abs(ana))))
    return [
        CheckResult("generator: conjugation pairing", pair, 1e-10),
        CheckResult("generator: phase derivative equals omega_eff (rel.)", phase, 1e-6),
        CheckResult("generator: FD vs analytic derivative (rel.)", fd, 1e-6),
    ]


def check_propagation(tols: Tolerances) -> list[CheckResult]:
    p = SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("tanh_ramp", 1.5, 3.5, 20, 5))
    g = build_spin_scenario(p)
    grid = np.linspace(0, 30, 121)
    ex = propagate_exact(g, SPIN_UP, IntegratorConfig(grid, 80), tols=tols, check=False)
    ext = propagate_extended(g, SPIN_UP, 16, IntegratorConfig(grid, 160), tols=tols, check=False)
    fine = propagate_exact(g, SPIN_UP, IntegratorConfig(grid, 160), tols=tols, check=False)
    osc = build_oscillator_scenario(OscillatorScenarioParams(1.0, 0.05, RampSpec("constant", 1.01), 0.01))
    ogrid = np.linspace(0, 30, 61)
    otraj = propagate_exact(osc, fock_dm(30), IntegratorConfig(ogrid, 40), tols=tols, check=False)
    out = []
    for label, traj in (("spin", ex), ("oscillator", otraj)):
        reps = [density_report(r) for r in traj.states]
        out += [
            CheckResult(f"propagation: {label} exact trace drift", max(r["trace"] for r in reps),
                        tols.trajectory_trace),
            CheckResult(f"propagation: {label} exact Hermiticity", max(r["hermiticity"] for r in reps),
                        tols.trajectory_hermitian),
            CheckResult(f"propagation: {label} exact min eigenvalue", min(r["min_eig"] for r in reps),
                        -tols.positivity, ">="),
        ]
    out += [
        CheckResult("propagation: composition law", composition_check(g, SPIN_UP, IntegratorConfig(grid, 80),
                                                                      11.3, 30.0, tols), tols.composition),
        CheckResult("propagation: step halving", float(np.max(np.abs(ex.states - fine.states))), tols.convergence),
        CheckResult("propagation: exact vs extended(16)", float(np.max(np.abs(ex.states - ext.states))),
                    tols.convergence),
    ]
    return out


def check_expansion(tols: Tolerances, rng, draws: int = 50, times: int = 4) -> list[CheckResult]:
    closed = dual = 0.0
    for k in range(draws):
        variant = "fast_rotation" if k % 2 == 0 else "slow_rotation_fast_amplitude"
        p = _spin_draw(rng, variant)
        g = build_spin_scenario(p)
        h, dh = _spin_h(p)
        for t in rng.uniform(0, 80, size=times):
            l1, l2 = leff_order1_term(g, t), leff_order2_term(g, t, tols)
            closed = max(closed, float(np.max(np.abs(l1 - spin_reference_leff(p, t, 1)))),
                         float(np.max(np.abs(l2 - spin_reference_leff(p, t, 2)))))
            om = omega_components(g, t, 1, tols)
            theta = rng.uniform(0, 2 * np.pi)
            phase = theta + g.phase.phi(t)
            mm = sum(om[n] * np.exp(1j * n * phase) for n in om)
            closed = max(closed, float(np.max(np.abs(mm - spin_reference_micromotion(p, t, theta)))))
            if variant != "fast_rotation":
                closed = max(closed, float(np.max(np.abs(l2 - spin_slow_rotation_leff2(p, t)))))
            spec = leff_lindblad_specialized(h, [(SIGMA_MINUS, p.gamma)], g, t, h_derivatives=dh, tols=tols)
            dual = max(dual, float(np.max(np.abs(spec - l1 - l2))))
    return [
        CheckResult("hf: generic expansion vs spin closed forms", closed, 1e-10),
        CheckResult(f"hf: generic vs specialized single-jump formula ({draws} draws)", dual, 1e-10),
    ]


def check_effective(tols: Tolerances, rng) -> list[CheckResult]:
    p = SpinScenarioParams(0.5, 0.1, "slow_rotation_fast_amplitude", RampSpec("sinusoid", 2.0, 3.0, 0, 5), omega_c=0.3)
    g = build_spin_scenario(p)
    tr = 0.0
    for order in (0, 1, 2):
        eg = EffectiveGenerator(g, order, tols)
        tr = max(tr, max(trace_annihilation_error(eg.eval(t)) for t in rng.uniform(0, 40, size=5)))
    static = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 3.0)))
    eg = EffectiveGenerator(static, 2, tols)
    var = max(float(np.max(np.abs(eg.eval(t) - eg.eval(0.0)))) for t in (1.0, 7.3, 40.0))
    period = 2 * np.pi / 3.0
    per = max(float(np.max(np.abs(micromotion_superop(static, t + period, 0.4, 2, tols)
                                  - micromotion_superop(static, t, 0.4, 2, tols)))) for t in (0.0, 1.1, 5.0))
    return [
        CheckResult("hf: L_eff trace-annihilating (orders 0-2)", tr, 1e-10),
        CheckResult("hf: constant drive gives time-constant L_eff", var, 1e-12),
        CheckResult("hf: constant drive gives T-periodic D", per, 1e-10),
    ]


SUITES: dict[str, Callable] = {
    "liouville": lambda tols, rng: check_liouville(tols, rng),
    "generator": lambda tols, rng: check_generators(tols, rng),
    "propagation": lambda tols, rng: check_propagation(tols),
    "expansion": lambda tols, rng: check_expansion(tols, rng),
    "effective": lambda tols, rng: check_effective(tols, rng),
}


def run_validation(tols: Tolerances = DEFAULT_TOLERANCES, seed: int = 20240601) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for suite in SUITES.values():
        results += suite(tols, rng)
    return results
