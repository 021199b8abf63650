import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from floqgen.errors import ConfigError, TruncationTooSmall
from floqgen.hf import EffectiveGenerator, instantaneous_steady_state, micromotion_superop
from floqgen.liouville import vectorize
from floqgen.operators import PAULI, destroy, fock_dm, number
from floqgen.scenarios import (
    OscillatorScenarioParams,
    RampSpec,
    SpinScenarioParams,
    build_oscillator_scenario,
    build_spin_scenario,
    check_fock_truncation,
    driven_damped_occupation,
    effective_max_step,
    micromotion_bound_spin,
    oscillator_displacement,
    oscillator_reference_asymptote,
    spin_reference_steady,
    spin_slow_rotation_c_matrix,
)

import conftest

ramps = st.builds(
    RampSpec, st.sampled_from(["tanh_ramp", "sinusoid"]), st.floats(0.5, 3.0), st.floats(0.5, 6.0),
    st.floats(0.0, 100.0), st.floats(0.5, 30.0),
)


def _bloch(rho):
    return np.array([np.real(np.trace(rho @ s)) for s in PAULI])


@given(ramps, st.floats(0.0, 200.0))
def test_ramp_integral_and_derivative(r, t):
    val, _ = quad(lambda s: float(r.value(s)), 0.0, t, limit=2000)
    assert float(r.integral(t)) == pytest.approx(val, rel=1e-9, abs=1e-9)
    h = 1e-5
    fd = (float(r.value(t + h)) - float(r.value(t - h))) / (2 * h)
    assert float(r.derivative(t)) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_ramp_shapes():
    r = RampSpec("tanh_ramp", 1.5, 3.5, 80.0, 10.0)
    assert float(r.value(80.0)) == pytest.approx(2.5)
    assert float(r.value(1e4)) == pytest.approx(3.5)
    assert r.slow_scale == 10.0 and r.extrema == (1.5, 3.5)
    s = RampSpec("sinusoid", 1.5, 3.5, 0.0, 20.0)
    assert float(s.value(10 * math.pi)) == pytest.approx(3.5)
    c = RampSpec("constant", 2.0)
    assert c.slow_scale == math.inf and float(c.integral(3.0)) == 6.0
    # large arguments must not overflow
    assert np.isfinite(RampSpec("tanh_ramp", 1.0, 2.0, 0.0, 1e-3).integral(1e3))


def test_ramp_rejects_bad_input():
    with pytest.raises(ConfigError):
        RampSpec("square", 1.0)
    with pytest.raises(ConfigError):
        RampSpec("tanh_ramp", 1.0)
    with pytest.raises(ConfigError):
        RampSpec("tanh_ramp", 1.0, 2.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        SpinScenarioParams(0.5, 0.1, "spiral", RampSpec())
    with pytest.raises(ConfigError):
        OscillatorScenarioParams(1.0, 0.05, RampSpec("constant", 1.01), 0.01, fock_dim=1)


def _rho_s_closed_form(alpha, gamma, w):
    # 1/2 - [g w a^2 sy + (g w)^2 / 2 sz] / [2 a^4 + (g w)^2]
    sx, sy, sz = PAULI
    gw = gamma * w
    return 0.5 * np.eye(2) - (gw * alpha**2 * sy + 0.5 * gw**2 * sz) / (2 * alpha**4 + gw**2)


def _rho_inf_closed_form(alpha, gamma, w, wc):
    sx, sy, sz = PAULI
    den = 2 * gamma**2 * w**4 + alpha**4 * wc**2
    return 0.5 * np.eye(2) + (alpha**2 * wc * gamma * w**2 * sy - gamma**2 * w**4 * sz) / den


@given(st.floats(0.1, 1.0), st.floats(0.01, 0.5), st.floats(1.0, 10.0))
def test_rho_s_matches_closed_form(alpha, gamma, w):
    p = SpinScenarioParams(alpha, gamma, "fast_rotation", RampSpec("constant", w))
    assert np.max(np.abs(spin_reference_steady(p).rho - _rho_s_closed_form(alpha, gamma, w))) < 1e-12


@given(st.floats(0.1, 1.0), st.floats(1e-3, 0.1), st.floats(1.5, 6.0), st.floats(0.05, 0.5))
def test_rho_inf_matches_closed_form(alpha, gamma, w, wc):
    p = SpinScenarioParams(alpha, gamma, "slow_rotation_fast_amplitude", RampSpec("constant", w), omega_c=wc)
    assert np.max(np.abs(spin_reference_steady(p).rho - _rho_inf_closed_form(alpha, gamma, w, wc))) < 1e-12


def test_rho_s_limits():
    down = np.diag([0.0, 1.0])
    strong = SpinScenarioParams(0.5, 10.0, "fast_rotation", RampSpec("constant", 1000.0))
    weak = SpinScenarioParams(0.5, 1e-4, "fast_rotation", RampSpec("constant", 1.0))
    assert np.max(np.abs(spin_reference_steady(strong).rho - down)) < 1e-4
    assert np.max(np.abs(spin_reference_steady(weak).rho - 0.5 * np.eye(2))) < 1e-3


def test_steady_state_is_kernel_of_order1_generator(fig1a_generator):
    rho = spin_reference_steady(conftest.FIG1A, 0.0).rho
    lg = EffectiveGenerator(fig1a_generator, 1).eval(0.0)
    assert np.max(np.abs(lg @ vectorize(rho))) < 1e-15
    ss = spin_reference_steady(conftest.FIG1A, 0.0)
    assert np.allclose(_bloch(ss.rho), ss.bloch)


def test_slow_rotation_steady_state_frozen(slow_generator):
    # kernel of the full order-2 generator at t = 0, frozen from a null-space solve
    bloch = _bloch(instantaneous_steady_state(EffectiveGenerator(slow_generator, 2), 0.0))
    ref = spin_reference_steady(conftest.SLOW).bloch
    assert abs(bloch[0]) < 1e-12
    assert np.max(np.abs(bloch - ref)) < 2e-3


def test_c_matrix_structure():
    p = conftest.SLOW
    for t in (0.0, 1.0, 4.2):
        c = spin_slow_rotation_c_matrix(p, t)
        th = p.omega_c * t
        cs, c2 = math.cos(th) * math.sin(th), math.cos(th) ** 2
        assert np.allclose(c, c.conj().T)
        # published entry pattern; the overall prefactor is cos^2 / 2
        shape = np.array([[0, 0, cs, -c2], [0, 2 * c2, 1j * c2, 1j * cs],
                          [cs, -1j * c2, 0, cs], [-c2, -1j * cs, cs, -2 * c2]])
        assert np.allclose(c, 0.5 * shape, atol=1e-15)
    assert np.max(np.abs(spin_slow_rotation_c_matrix(p, math.pi / (2 * p.omega_c)))) < 1e-15


def test_micromotion_bound():
    p = SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("constant", 2.0))
    assert micromotion_bound_spin(p) == pytest.approx(2 * 0.5 * math.sqrt(0.5) / 2.0)


def test_effective_max_step_rule():
    assert effective_max_step(0.1, 10.0) == pytest.approx(0.1)
    assert effective_max_step(0.01, 10.0, detuning=0.01) == pytest.approx(0.1)
    assert effective_max_step(0.01, math.inf, detuning=1.0) == pytest.approx(2 * math.pi / 40)
    assert effective_max_step(0.0) == 1.0


def test_oscillator_occupation_value():
    # f = 0.05, Delta = 0.01, gamma = 0.01
    assert driven_damped_occupation(0.05, 0.01, 0.01) == pytest.approx(3.125)
    ref = oscillator_reference_asymptote(conftest.FIG4A)
    assert ref.n_ss == pytest.approx(3.125, abs=1e-6)
    assert ref.period == pytest.approx(math.pi / 1.01)
    eta = math.sqrt(3.125)  # coherent steady state: |<a>|^2 = n
    assert ref.amplitude == pytest.approx(2 * 0.05 / (2 * 2.01) * eta, rel=1e-6)


def test_asymptote_needs_constant_drive():
    p = OscillatorScenarioParams(1.0, 0.05, RampSpec("tanh_ramp", 1.0, 1.06, 800, 5), 0.01)
    with pytest.raises(ConfigError):
        oscillator_reference_asymptote(p)


def test_displacement_matches_first_order_micromotion(fig4a_generator):
    # agree on states away from the Fock cutoff
    rho = fock_dm(30, 0)
    for t, theta in ((0.0, 0.0), (2.3, 0.7)):
        d = micromotion_superop(fig4a_generator, t, theta, 1) @ vectorize(rho)
        ref = oscillator_displacement(conftest.FIG4A, t, theta) @ vectorize(rho)
        assert np.max(np.abs(d - ref)) < 1e-12


def test_oscillator_static_component_is_rotating_frame_drive(fig4a_generator):
    from floqgen.liouville import commutator_superop, dissipator_superop

    a = destroy(30)
    t = 5.0
    chi = 0.01 * t
    h0 = 0.025 * (a * np.exp(1j * chi) + a.conj().T * np.exp(-1j * chi))
    ref = commutator_superop(h0) + dissipator_superop(a, 0.01)
    assert np.max(np.abs(fig4a_generator.component(0, t) - ref)) < 1e-14


def test_fock_truncation_check():
    states = np.array([fock_dm(6, 0), fock_dm(6, 3)])
    assert check_fock_truncation(states) == 0.0
    with pytest.raises(TruncationTooSmall):
        check_fock_truncation(np.array([fock_dm(6, 5)]))


def test_builders_record_metadata():
    g = build_spin_scenario(conftest.SLOW)
    assert g.meta["variant"] == "slow_rotation_fast_amplitude" and g.dim == 2
    o = build_oscillator_scenario(conftest.FIG4A)
    assert o.meta["fock_dim"] == 30 and o.phase.omega_eff(0.0) == pytest.approx(2.01)
    assert np.allclose(np.diag(number(4)), [0, 1, 2, 3])
