import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from floqgen.errors import ShapeMismatch
from floqgen.generator import build_lindblad_generator
from floqgen.hf import (
    EffectiveGenerator,
    instantaneous_steady_state,
    leff_lindblad_specialized,
    leff_order1_term,
    leff_order2_term,
    micromotion_generator,
    micromotion_superop,
    omega_components,
    propagate_effective,
)
from floqgen.liouville import (
    commutator_superop,
    dissipator_superop,
    hermiticity_preservation_error,
    superop_expm,
    trace_annihilation_error,
    vectorize,
)
from floqgen.operators import SIGMA_MINUS, SIGMA_X, SIGMA_Z, SPIN_UP, destroy, pauli_dot
from floqgen.propagation import IntegratorConfig, propagate_exact
from floqgen.scenarios import (
    RampSpec,
    SpinScenarioParams,
    build_oscillator_scenario,
    build_spin_scenario,
    spin_field,
    spin_field_dot,
    spin_reference_leff,
    spin_reference_micromotion,
    spin_reference_steady,
    spin_slow_rotation_leff2,
)

import conftest
from conftest import random_density

VARIANTS = ("fast_rotation", "slow_rotation_fast_amplitude")

spin_params = st.builds(
    lambda alpha, gamma, variant, wi, wf, t0, tau, wc: SpinScenarioParams(
        alpha, gamma, variant, RampSpec("tanh_ramp", wi, wf, t0, tau), omega_c=wc),
    st.floats(0.1, 1.0), st.floats(0.0, 0.3), st.sampled_from(VARIANTS), st.floats(1.5, 3.0),
    st.floats(3.0, 6.0), st.floats(0.0, 50.0), st.floats(2.0, 20.0), st.floats(0.05, 0.5),
)


def _max(a):
    return float(np.max(np.abs(a)))


def _spin_hamiltonians(p):
    def h(sign, fn):
        def f(t):
            b = fn(p, t)
            return p.alpha * pauli_dot(b if sign > 0 else b.conj())
        return f
    hs = {1: h(1, spin_field), -1: h(-1, spin_field), 0: lambda t: np.zeros((2, 2), dtype=complex)}
    return hs, {1: h(1, spin_field_dot), -1: h(-1, spin_field_dot)}


@given(spin_params, st.floats(0.0, 80.0))
def test_generic_expansion_matches_spin_closed_forms(p, t):
    g = build_spin_scenario(p)
    assert _max(leff_order1_term(g, t) - spin_reference_leff(p, t, 1)) < 1e-10
    assert _max(leff_order2_term(g, t) - spin_reference_leff(p, t, 2)) < 1e-10
    assert _max(EffectiveGenerator(g, 0).eval(t) - spin_reference_leff(p, t, 0)) < 1e-14


@given(spin_params, st.floats(0.0, 80.0))
def test_specialized_formula_matches_generic(p, t):
    g = build_spin_scenario(p)
    hs, dhs = _spin_hamiltonians(p)
    spec = leff_lindblad_specialized(hs, [(SIGMA_MINUS, p.gamma)], g, t, h_derivatives=dhs)
    assert _max(spec - leff_order1_term(g, t) - leff_order2_term(g, t)) < 1e-10


@given(st.floats(0.0, 60.0))
def test_slow_rotation_order2_closed_form(t):
    p = conftest.SLOW
    assert _max(leff_order2_term(build_spin_scenario(p), t) - spin_slow_rotation_leff2(p, t)) < 1e-12


def test_slow_rotation_order1_vanishes(slow_generator):
    for t in (0.0, 2.0, 13.0):
        assert _max(leff_order1_term(slow_generator, t)) < 1e-15


@given(spin_params, st.floats(0.0, 80.0), st.floats(0.0, 2 * math.pi))
def test_first_order_micromotion_closed_form(p, t, theta):
    g = build_spin_scenario(p)
    assert _max(micromotion_generator(g, t, theta, 1) - spin_reference_micromotion(p, t, theta)) < 1e-12


@given(spin_params, st.floats(0.0, 80.0))
def test_effective_generator_is_trace_annihilating_and_hermitian(p, t):
    for order in (0, 1, 2):
        lg = EffectiveGenerator(build_spin_scenario(p), order).eval(t)
        assert trace_annihilation_error(lg) < 1e-12
        assert hermiticity_preservation_error(lg) < 1e-12


def test_specialized_formula_rejects_unsupported_input(fig1a_generator):
    z = np.zeros((2, 2), dtype=complex)
    with pytest.raises(ShapeMismatch):
        leff_lindblad_specialized({2: z, -2: z}, [(SIGMA_MINUS, 0.1)], fig1a_generator, 0.0)
    with pytest.raises(ShapeMismatch):
        leff_lindblad_specialized({1: z, -1: z}, [(SIGMA_MINUS, 0.1), (SIGMA_Z, 0.1)], fig1a_generator, 0.0)


def test_specialized_formula_oscillator():
    osc = build_oscillator_scenario(conftest.FIG4A)
    a = destroy(30)
    half = 0.025
    chi = 0.01  # drive detuning
    hs = {
        1: half * a.conj().T,
        -1: half * a,
        0: lambda t: half * (a * np.exp(1j * chi * t) + a.conj().T * np.exp(-1j * chi * t)),
    }
    for t in (0.0, 17.0):
        spec = leff_lindblad_specialized(hs, [(a, 0.01)], osc, t)
        assert _max(spec - leff_order1_term(osc, t) - leff_order2_term(osc, t)) < 1e-9


def test_order_bounds(fig1a_generator):
    with pytest.raises(ValueError):
        EffectiveGenerator(fig1a_generator, 3)
    with pytest.raises(ValueError):
        omega_components(fig1a_generator, 0.0, 0)


def test_order0_is_the_static_component(fig1a_generator):
    eg = EffectiveGenerator(fig1a_generator, 0)
    assert np.array_equal(eg.eval(5.0), fig1a_generator.component(0, 5.0))


def test_micromotion_scales_inverse_with_frequency():
    def om(w):
        g = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", w)))
        return omega_components(g, 0.0, 1)
    a, b = om(3.0), om(6.0)
    assert _max(a[0]) == 0.0
    for n in (-1, 1):
        assert _max(a[n] - 2 * b[n]) < 1e-15


def test_second_order_omega_reaches_double_harmonics(slow_generator):
    om = omega_components(slow_generator, 1.0, 2)
    assert set(om) == {-2, -1, 0, 1, 2}


def test_constant_drive_gives_constant_leff_and_periodic_d():
    g = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 3.0)))
    eg = EffectiveGenerator(g, 2)
    for t in (1.0, 7.3, 40.0):
        assert _max(eg.eval(t) - eg.eval(0.0)) < 1e-12
    period = 2 * math.pi / 3.0
    for t in (0.0, 1.1):
        assert _max(micromotion_superop(g, t + period, 0.4, 2) - micromotion_superop(g, t, 0.4, 2)) < 1e-10


def test_slow_rotation_micromotion_is_identity_at_half_periods(slow_generator):
    # first order: Omega is proportional to sin(omega t)
    for n in (1, 2, 5):
        t = n * math.pi / 2.0
        assert _max(micromotion_superop(slow_generator, t, 0.0, 1) - np.eye(4)) < 1e-12


def test_micromotion_inverse_roundtrip(fig1a_generator, rng):
    eg = EffectiveGenerator(fig1a_generator, 2)
    y = vectorize(random_density(rng, 2))
    fwd = eg.micromotion_apply(3.1, 0.2, 2, y)
    assert _max(eg.micromotion_apply(3.1, 0.2, 2, fwd, inverse=True) - y) < 1e-13
    assert _max(fwd - micromotion_superop(fig1a_generator, 3.1, 0.2, 2) @ y) < 1e-13


def test_oscillator_corrections_vanish_away_from_fock_cutoff(fig4a_generator, rng):
    # nested commutators of a and a^dag are c-numbers except at the cutoff
    rho = np.zeros((30, 30), dtype=complex)
    rho[:26, :26] = random_density(rng, 26)
    for t in (0.0, 3.3):
        assert _max(leff_order1_term(fig4a_generator, t) @ vectorize(rho)) < 1e-15
        assert _max(leff_order2_term(fig4a_generator, t) @ vectorize(rho)) < 1e-15


def test_undriven_generator_has_no_corrections():
    g = build_lindblad_generator({0: 0.7 * SIGMA_X}, [(SIGMA_MINUS, 0.2)], RampSpec("constant", 2.0).to_profile())
    assert _max(leff_order1_term(g, 1.0)) == 0.0
    assert _max(leff_order2_term(g, 1.0)) == 0.0


def test_fast_rotation_steady_state_matches_closed_form(fig1a_generator):
    for t in (0.0, 80.0, 150.0):
        rho = instantaneous_steady_state(EffectiveGenerator(fig1a_generator, 1), t)
        assert _max(rho - spin_reference_steady(conftest.FIG1A, t).rho) < 1e-12


def test_slow_rotation_steady_state_close_to_closed_form(slow_generator):
    # the closed form drops the time-dependent C part of the order-2 term
    rho = instantaneous_steady_state(EffectiveGenerator(slow_generator, 2), 0.0)
    assert _max(rho - spin_reference_steady(conftest.SLOW).rho) < 2e-3


def test_order0_propagation_is_pure_decay():
    g = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 3.0)))
    grid = np.linspace(0, 20, 21)
    traj = propagate_effective(g, SPIN_UP, IntegratorConfig(grid, max_step=0.05), 0, observables={"sz": SIGMA_Z})
    assert _max(traj.observables["sz"] - (2 * np.exp(-0.2 * grid) - 1)) < 1e-8
    assert traj.method_tag == "effective(0)"


def test_static_effective_matches_closed_form_propagator():
    g = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 3.0)))
    lg = EffectiveGenerator(g, 2).eval(0.0)
    grid = np.linspace(0, 10, 6)
    traj = propagate_effective(g, SPIN_UP, IntegratorConfig(grid, max_step=0.01), 2)
    for t, rho in zip(grid, traj.states):
        ref = (superop_expm(lg * t) @ vectorize(SPIN_UP)).reshape(2, 2, order="F")
        assert _max(rho - ref) < 1e-9


def test_effective_with_micromotion_tracks_exact():
    g = build_spin_scenario(SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 16.0)))
    grid = np.linspace(0, 20 * 2 * math.pi / 16, 81)
    ex = propagate_exact(g, SPIN_UP, IntegratorConfig(grid, 200))
    plain = propagate_effective(g, SPIN_UP, IntegratorConfig(grid, max_step=0.005), 2)
    dressed = propagate_effective(g, SPIN_UP, IntegratorConfig(grid, max_step=0.005), 2,
                                  with_micromotion=True, micromotion_order=2)
    err_plain = _max(plain.states - ex.states)
    err_dressed = _max(dressed.states - ex.states)
    assert err_dressed < 1e-4
    assert err_dressed < err_plain / 10
    assert dressed.method_tag == "effective_micromotion(2)"
    assert dressed.meta["micromotion_order"] == 2


def test_closed_form_generator_sanity():
    # order-1 spin term: H = (h/2) sigma_x with h = -2 alpha^2 / omega
    p = SpinScenarioParams(0.5, 0.0, "fast_rotation", RampSpec("constant", 2.0))
    ref = spin_reference_leff(p, 0.0, 1)
    assert _max(ref - commutator_superop(-0.125 * SIGMA_X)) < 1e-15
    assert _max(spin_reference_leff(p, 0.0, 0) - dissipator_superop(SIGMA_MINUS, 0.0)) == 0.0
