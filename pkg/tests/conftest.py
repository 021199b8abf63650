import numpy as np
import pytest
from hypothesis import settings

from floqgen.scenarios import (
    OscillatorScenarioParams,
    RampSpec,
    SpinScenarioParams,
    build_oscillator_scenario,
    build_spin_scenario,
)

settings.register_profile("floqgen", deadline=None, max_examples=40)
settings.load_profile("floqgen")

FIG1A = SpinScenarioParams(0.5, 0.1, "fast_rotation", RampSpec("tanh_ramp", 1.5, 3.5, 80.0, 10.0))
SLOW = SpinScenarioParams(0.5, 0.1, "slow_rotation_fast_amplitude", RampSpec("constant", 2.0), omega_c=0.3)
FIG4A = OscillatorScenarioParams(1.0, 0.05, RampSpec("constant", 1.01), 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fig1a_generator():
    return build_spin_scenario(FIG1A)


@pytest.fixture(scope="session")
def slow_generator():
    return build_spin_scenario(SLOW)


@pytest.fixture(scope="session")
def fig4a_generator():
    return build_oscillator_scenario(FIG4A)


def random_operator(rng, d, hermitian=False):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T if hermitian else a


def random_density(rng, d):
    a = random_operator(rng, d)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


ACCEPTANCE_LINES: list[str] = []


def report_acceptance(line: str) -> None:
    """Record an acceptance PASS/FAIL line; echoed now and in the terminal summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
