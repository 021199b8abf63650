"""Reference propagation of quasi-periodic master equations.

Two independent routes to ``rho(t)``:

* :func:`propagate_exact` integrates ``d rho/dt = L(t) rho`` directly with
  fixed-step RK4 resolved on the fast period.
* :func:`propagate_extended` integrates the Fourier coefficients of the
  phase-extended state, truncated to ``|n| <= n_max``, and resynthesizes
  ``rho(t) = sum_n rho_n(t) exp(i n (theta0 + phi(t)))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import StateInvariantViolation, StepTooLarge, TruncationNotConverged
from .generator import ComponentStack, QuasiPeriodicGenerator
from .liouville import check_density_matrix, devectorize, vectorize

RK4_STABILITY_MARGIN = 2.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    ``step`` pins the step size; it must then resolve the fast period or
    :class:`StepTooLarge` is raised. Otherwise the step on each output
    interval is the largest one below both ``max_step`` and
    ``2 pi / (omega_eff * steps_per_fast_period)``.
    """

    t_grid: Sequence[float]
    steps_per_fast_period: int = 40
    max_step: float = math.inf
    step: float | None = None
    method: str = "rk4"

    def __post_init__(self):
        grid = np.asarray(self.t_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("t_grid must be a non-empty 1-D sequence")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("t_grid must be strictly increasing")
        if self.steps_per_fast_period <= 0 or self.max_step <= 0:
            raise ValueError("resolution parameters must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")
        object.__setattr__(self, "t_grid", grid)

    def refined(self, factor: int = 2) -> "IntegratorConfig":
        """Same grid with every step divided by ``factor``."""
        return replace(
            self,
            steps_per_fast_period=self.steps_per_fast_period * factor,
            max_step=self.max_step / factor,
            step=None if self.step is None else self.step / factor,
        )


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    method_tag: str
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("tij,ji->t", self.states, op))


@dataclass(frozen=True)
class ExtendedState:
    """Fourier blocks ``rho_n`` for ``n = -n_max..n_max`` (row ``n + n_max``)."""

    n_max: int
    blocks: np.ndarray

    @classmethod
    def initial(cls, rho0: np.ndarray, n_max: int) -> "ExtendedState":
        d = rho0.shape[0]
        blocks = np.zeros((2 * n_max + 1, d * d), dtype=complex)
        blocks[n_max] = vectorize(rho0)
        return cls(n_max, blocks)

    def reconstruct(self, phase: float) -> np.ndarray:
        """``sum_n rho_n exp(i n phase)`` with ``phase = theta0 + phi(t)``."""
        n = np.arange(-self.n_max, self.n_max + 1)
        vec = np.exp(1j * n * phase) @ self.blocks
        return devectorize(vec)


# ---------------------------------------------------------------------------
# RK4 driver


def _rk4_segment(rhs, t: float, y: np.ndarray, h: float, nsteps: int) -> np.ndarray:
    for _ in range(nsteps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
    return y


def rk4_integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_start: float,
    t_grid: Sequence[float],
    step_bound: Callable[[float, float], float],
    fixed_step: float | None = None,
):
    """Integrate from ``t_start`` and yield ``(t, y)`` at each grid time.

    Each output interval is split into equal steps no longer than
    ``step_bound(a, b)``; intermediate stages are not retained.
    """
    y = y0
    t = t_start
    for t_out in t_grid:
        if t_out < t - 1e-12:
            raise ValueError(f"grid time {t_out} precedes start {t}")
        span = t_out - t
        if span > 0:
            bound = step_bound(t, t_out)
            if fixed_step is not None:
                if fixed_step > bound * (1 + 1e-12):
                    raise StepTooLarge(f"step {fixed_step:.4g} exceeds resolution bound {bound:.4g}")
                bound = fixed_step
            nsteps = max(1, math.ceil(span / bound - 1e-9))
            y = _rk4_segment(rhs, t, y, span / nsteps, nsteps)
        t = t_out
        yield t, y


def _fast_step_bound(g: QuasiPeriodicGenerator, cfg: IntegratorConfig, extra: float = math.inf):
    def bound(a: float, b: float) -> float:
        w = g.phase.max_omega(a, b)
        if w <= 0:
            raise StepTooLarge(f"non-positive instantaneous frequency {w} on [{a}, {b}]")
        return min(cfg.max_step, 2 * math.pi / (w * cfg.steps_per_fast_period), extra / w)
    return bound


def _observable_series(states: np.ndarray, observables: Mapping[str, np.ndarray] | None):
    if not observables:
        return {}
    return {name: np.real(np.einsum("tij,ji->t", states, op)) for name, op in observables.items()}


def trajectory_report(states: np.ndarray) -> dict[str, float]:
    """Worst trace defect, Hermiticity defect and smallest eigenvalue over a trajectory."""
    states = np.asarray(states)
    herm = float(np.max(np.abs(states - states.conj().transpose(0, 2, 1))))
    trace = float(np.max(np.abs(np.einsum("tii->t", states) - 1.0)))
    sym = 0.5 * (states + states.conj().transpose(0, 2, 1))
    min_eig = float(np.min(np.linalg.eigvalsh(sym)[:, 0]))
    return {"trace_drift": trace, "hermiticity": herm, "min_eigenvalue": min_eig}


def _check_states(states, tag: str, tol_p: float, tols: Tolerances, trace_tol: float, herm_tol: float):
    for k, rho in enumerate(states):
        try:
            check_density_matrix(rho, tol_p=tol_p, tols=tols, hermitian_tol=herm_tol, trace_tol=trace_tol)
        except StateInvariantViolation as exc:
            raise StateInvariantViolation(f"{tag} state #{k}: {exc}") from None


# ---------------------------------------------------------------------------
# direct integration


def propagate_exact(
    g: QuasiPeriodicGenerator,
    rho0: np.ndarray,
    cfg: IntegratorConfig,
    observables: Mapping[str, np.ndarray] | None = None,
    tols: Tolerances = DEFAULT_TOLERANCES,
    t_start: float = 0.0,
    check: bool = True,
) -> Trajectory:
    """Time-ordered integration of ``d rho/dt = L(t) rho`` from ``t_start``.

    Output states are checked against the trajectory tolerances (trace
    ``1e-8``, Hermiticity ``1e-9``, positivity ``tols.positivity``).
    """
    stack = ComponentStack(g)

    def rhs(t, y):
        return stack.apply(t, y, g.theta0 + g.phase.phi(t))

    states = np.empty((len(cfg.t_grid), g.dim, g.dim), dtype=complex)
    runs = rk4_integrate(rhs, vectorize(np.asarray(rho0, dtype=complex)).copy(), t_start, cfg.t_grid,
                         _fast_step_bound(g, cfg), cfg.step)
    for k, (_, y) in enumerate(runs):
        states[k] = devectorize(y, g.dim)
    if check:
        _check_states(states, "exact", tols.positivity, tols, tols.trajectory_trace, tols.trajectory_hermitian)
    return Trajectory(np.array(cfg.t_grid), states, "exact", _observable_series(states, observables),
                      {"steps_per_fast_period": cfg.steps_per_fast_period})


def composition_check(
    g: QuasiPeriodicGenerator,
    rho0: np.ndarray,
    cfg: IntegratorConfig,
    t_mid: float,
    t_end: float,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Max entrywise gap between ``Lambda(t_end, 0)`` and ``Lambda(t_end, t_mid) Lambda(t_mid, 0)``."""
    if not 0 <= t_mid <= t_end:
        raise ValueError("need 0 <= t_mid <= t_end")
    direct = propagate_exact(g, rho0, replace(cfg, t_grid=[t_end]), tols=tols, check=False).states[-1]
    if t_mid == 0 or t_mid == t_end:
        # degenerate split: one stage is the identity map
        return 0.0
    half = propagate_exact(g, rho0, replace(cfg, t_grid=[t_mid]), tols=tols, check=False).states[-1]
    staged = propagate_exact(g, half, replace(cfg, t_grid=[t_end]), tols=tols, t_start=t_mid,
                             check=False).states[-1]
    return float(np.max(np.abs(direct - staged)))


# ---------------------------------------------------------------------------
# extended-space integration


def propagate_extended(
    g: QuasiPeriodicGenerator,
    rho0: np.ndarray,
    n_max: int,
    cfg: IntegratorConfig,
    observables: Mapping[str, np.ndarray] | None = None,
    tols: Tolerances = DEFAULT_TOLERANCES,
    verify_truncation: bool = False,
    check: bool = True,
) -> Trajectory:
    """Truncated Fourier-block integration with resynthesis at the physical phase.

    The blocks obey ``d rho_n/dt = sum_m L^(n-m)(t) rho_m - i n omega_eff(t) rho_n``
    with a hard zero boundary at ``|n| = n_max``. The step is additionally
    capped at ``2 / (n_max omega_eff)`` to keep the outermost rotating blocks
    inside the RK4 stability region.

    With ``verify_truncation`` the run is repeated at ``2 n_max`` and
    :class:`TruncationNotConverged` is raised if any observable (or state
    entry, when no observables are given) moves by more than
    ``tols.convergence``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    stack = ComponentStack(g)
    nvec = np.arange(-n_max, n_max + 1)
    state0 = ExtendedState.initial(np.asarray(rho0, dtype=complex), n_max)

    def rhs(t, blocks):
        out = stack.apply_blocks(t, blocks)
        out -= 1j * g.phase.omega_eff(t) * nvec[:, None] * blocks
        return out

    states = np.empty((len(cfg.t_grid), g.dim, g.dim), dtype=complex)
    bound = _fast_step_bound(g, cfg, extra=RK4_STABILITY_MARGIN / n_max)
    for k, (t, blocks) in enumerate(rk4_integrate(rhs, state0.blocks.copy(), 0.0, cfg.t_grid, bound, cfg.step)):
        states[k] = ExtendedState(n_max, blocks).reconstruct(g.theta0 + g.phase.phi(t))
    if check:
        _check_states(states, "extended", tols.convergence, tols, tols.convergence, tols.convergence)
    traj = Trajectory(np.array(cfg.t_grid), states, "extended_space", _observable_series(states, observables),
                      {"n_max": n_max, "steps_per_fast_period": cfg.steps_per_fast_period})
    if verify_truncation:
        finer = propagate_extended(g, rho0, 2 * n_max, cfg, observables, tols, check=False)
        delta = truncation_delta(traj, finer)
        traj.meta["n_max_doubling_delta"] = delta
        if delta > tols.convergence:
            raise TruncationNotConverged(f"doubling n_max={n_max} moved results by {delta:.3e}")
    return traj


def truncation_delta(a: Trajectory, b: Trajectory) -> float:
    """Largest observable change between two runs (state entries if no observables)."""
    if a.observables:
        return max(float(np.max(np.abs(a.observables[k] - b.observables[k]))) for k in a.observables)
    return float(np.max(np.abs(a.states - b.states)))
