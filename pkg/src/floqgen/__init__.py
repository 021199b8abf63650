"""Generalized Floquet factorization for slowly modulated, periodically driven Lindblad dynamics."""

from .config import DEFAULT_TOLERANCES, Tolerances, load_tolerances
from .generator import (
    HarmonicComponent,
    PhaseProfile,
    QuasiPeriodicGenerator,
    Term,
    build_lindblad_generator,
    eval_generator,
)
from .hf import (
    EffectiveGenerator,
    instantaneous_steady_state,
    leff_lindblad_specialized,
    leff_order1_term,
    leff_order2_term,
    micromotion_superop,
    omega_components,
    propagate_effective,
)
from .propagation import IntegratorConfig, Trajectory, propagate_exact, propagate_extended

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOLERANCES",
    "EffectiveGenerator",
    "HarmonicComponent",
    "IntegratorConfig",
    "PhaseProfile",
    "QuasiPeriodicGenerator",
    "Term",
    "Tolerances",
    "Trajectory",
    "build_lindblad_generator",
    "eval_generator",
    "instantaneous_steady_state",
    "leff_lindblad_specialized",
    "leff_order1_term",
    "leff_order2_term",
    "load_tolerances",
    "micromotion_superop",
    "omega_components",
    "propagate_effective",
    "propagate_exact",
    "propagate_extended",
    "__version__",
]
