"""Experiment configs, pipeline runs, CSV/manifest output and trajectory comparison."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import jsonschema
import numpy as np

from .config import Tolerances, load_tolerances
from .errors import ConfigError, ShapeMismatch, StateInvariantViolation
from .generator import QuasiPeriodicGenerator, build_lindblad_generator
from .hf import propagate_effective
from .liouville import check_density_matrix
from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z, SPIN_DOWN, SPIN_UP, fock_dm, number
from .propagation import (
    IntegratorConfig,
    Trajectory,
    propagate_exact,
    propagate_extended,
    trajectory_report,
    truncation_delta,
)
from .scenarios import (
    OscillatorScenarioParams,
    RampSpec,
    SpinScenarioParams,
    build_oscillator_scenario,
    build_spin_scenario,
    check_fock_truncation,
    effective_max_step,
)

SCHEMA_VERSION = 1
DEFAULT_EXACT_SPP = 80
DEFAULT_EXTENDED_SPP = 160
DEFAULT_N_MAX = 16

_RAMP = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["constant", "tanh_ramp", "sinusoid"]},
        "w_i": {"type": "number"},
        "w_f": {"type": "number"},
        "t0": {"type": "number"},
        "tau": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind", "w_i"],
    "additionalProperties": False,
}

_REAL_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_MATRIX = {
    "type": "object",
    "properties": {"re": _REAL_MATRIX, "im": _REAL_MATRIX},
    "required": ["re"],
    "additionalProperties": False,
}

_SPIN = {
    "type": "object",
    "properties": {
        "type": {"const": "spin"},
        "variant": {"enum": ["fast_rotation", "slow_rotation_fast_amplitude"]},
        "alpha": {"type": "number"},
        "gamma": {"type": "number", "minimum": 0},
        "omega_c": {"type": "number"},
        "theta0": {"type": "number"},
        "ramp": _RAMP,
    },
    "required": ["type", "variant", "alpha", "gamma", "ramp"],
    "additionalProperties": False,
}

_OSCILLATOR = {
    "type": "object",
    "properties": {
        "type": {"const": "oscillator"},
        "omega0": {"type": "number", "exclusiveMinimum": 0},
        "drive_amplitude": {"oneOf": [{"type": "number"}, _RAMP]},
        "drive_freq": _RAMP,
        "gamma": {"type": "number", "minimum": 0},
        "fock_dim": {"type": "integer", "minimum": 10},
        "theta0": {"type": "number"},
    },
    "required": ["type", "omega0", "drive_amplitude", "drive_freq", "gamma"],
    "additionalProperties": False,
}

_GENERIC = {
    "type": "object",
    "properties": {
        "type": {"const": "generic"},
        "dim": {"type": "integer", "minimum": 1},
        "phase": _RAMP,
        "theta0": {"type": "number"},
        "hamiltonian": {"type": "object", "patternProperties": {"^-?[0-9]+$": _MATRIX},
                        "additionalProperties": False},
        "jumps": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"op": _MATRIX, "rate": {"type": "number", "minimum": 0}},
                "required": ["op", "rate"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["type", "dim", "phase", "hamiltonian"],
    "additionalProperties": False,
}

_METHOD = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["exact", "extended", "effective", "effective_micromotion"]},
        "n_max": {"type": "integer", "minimum": 1},
        "order": {"type": "integer", "minimum": 0, "maximum": 2},
        "micromotion_order": {"type": "integer", "minimum": 1, "maximum": 2},
        "steps_per_fast_period": {"type": "integer", "minimum": 1},
        "max_step": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "extended"}}}, "then": {"required": ["n_max"]}},
        {"if": {"properties": {"kind": {"enum": ["effective", "effective_micromotion"]}}},
         "then": {"required": ["order"]}},
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "scenario": {"oneOf": [_SPIN, _OSCILLATOR, _GENERIC]},
        "initial_state": {
            "oneOf": [
                {"enum": ["spin_up", "spin_down", "vacuum"]},
                {"type": "object", "properties": {"fock": {"type": "integer", "minimum": 0}},
                 "required": ["fock"], "additionalProperties": False},
                _MATRIX,
            ]
        },
        "window": {
            "type": "object",
            "properties": {"t_start": {"const": 0}, "t_end": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["t_end"],
            "additionalProperties": False,
        },
        "output_grid": {
            "oneOf": [
                {"type": "object", "properties": {"count": {"type": "integer", "minimum": 2}},
                 "required": ["count"], "additionalProperties": False},
                {"type": "object", "properties": {"times": {"type": "array", "items": {"type": "number"},
                                                            "minItems": 1}},
                 "required": ["times"], "additionalProperties": False},
            ]
        },
        "methods": {"type": "array", "items": _METHOD, "minItems": 1},
        "observables": {
            "type": "array",
            "items": {
                "oneOf": [
                    {"enum": ["sigma_x", "sigma_y", "sigma_z", "number"]},
                    {"type": "object", "properties": {"name": {"type": "string", "pattern": "^[A-Za-z0-9_]+$"},
                                                      "op": _MATRIX},
                     "required": ["name", "op"], "additionalProperties": False},
                ]
            },
            "minItems": 1,
        },
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "diagnostics": {
            "type": "object",
            "properties": {"step_halving": {"type": "boolean"}, "n_max_doubling": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "required": ["schema_version", "name", "scenario", "window", "output_grid", "methods", "observables"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# parsing


def _matrix(spec: Mapping[str, Any]) -> np.ndarray:
    re = np.asarray(spec["re"], dtype=float)
    im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
    if re.ndim != 2 or re.shape[0] != re.shape[1] or im.shape != re.shape:
        raise ConfigError("matrices must be square with matching re/im parts")
    return re + 1j * im


def _ramp(spec: Mapping[str, Any]) -> RampSpec:
    return RampSpec(**spec)


@dataclass
class Scenario:
    """A built generator with its model-level context."""

    generator: QuasiPeriodicGenerator
    rho0: np.ndarray
    initial_state: dict
    model: str
    slow_scale: float
    gamma: float
    detuning: float = 0.0
    params: object = None

    def fast_period(self, t):
        return 2 * math.pi / np.vectorize(self.generator.phase.omega_eff)(t)


def build_scenario(scenario: Mapping[str, Any], initial: Any = None) -> Scenario:
    kind = scenario["type"]
    if kind == "spin":
        p = SpinScenarioParams(
            alpha=scenario["alpha"], gamma=scenario["gamma"], variant=scenario["variant"],
            ramp=_ramp(scenario["ramp"]), omega_c=scenario.get("omega_c", 0.0), theta0=scenario.get("theta0", 0.0),
        )
        g = build_spin_scenario(p)
        slow = min(p.ramp.slow_scale, 1.0 / abs(p.omega_c) if p.omega_c else math.inf)
        sc = Scenario(g, SPIN_UP, {}, "spin", slow, p.gamma, params=p)
        default = "spin_up"
    elif kind == "oscillator":
        amp = scenario["drive_amplitude"]
        amp = RampSpec("constant", float(amp)) if isinstance(amp, (int, float)) else _ramp(amp)
        p = OscillatorScenarioParams(
            omega0=scenario["omega0"], drive_amplitude=amp, drive_freq=_ramp(scenario["drive_freq"]),
            gamma=scenario["gamma"], fock_dim=scenario.get("fock_dim", 30), theta0=scenario.get("theta0", 0.0),
        )
        g = build_oscillator_scenario(p)
        slow = min(p.drive_freq.slow_scale, amp.slow_scale)
        lo, hi = p.drive_freq.extrema
        detuning = max(abs(lo - p.omega0), abs(hi - p.omega0))
        sc = Scenario(g, fock_dm(p.fock_dim), {}, "oscillator", slow, p.gamma, detuning, params=p)
        default = "vacuum"
    elif kind == "generic":
        dim = scenario["dim"]
        h = {int(n): _matrix(m) for n, m in scenario["hamiltonian"].items()}
        if 0 not in h:
            h[0] = np.zeros((dim, dim), dtype=complex)
        jumps = [(_matrix(j["op"]), j["rate"]) for j in scenario.get("jumps", [])]
        for op in list(h.values()) + [j[0] for j in jumps]:
            if op.shape != (dim, dim):
                raise ConfigError(f"operator shape {op.shape} does not match dim {dim}")
        ramp = _ramp(scenario["phase"])
        g = build_lindblad_generator(h, jumps, ramp.to_profile(), theta0=scenario.get("theta0", 0.0), dim=dim,
                                     meta={"model": "generic"})
        rates = [r for _, r in jumps if r > 0]
        sc = Scenario(g, fock_dm(dim, 0), {}, "generic", ramp.slow_scale, max(rates, default=0.0))
        default = "basis_0"
    else:  # pragma: no cover - schema guards this
        raise ConfigError(f"unknown scenario type {kind!r}")

    dim = sc.generator.dim
    if initial is None:
        sc.initial_state = {"state": default, "defaulted": True}
    else:
        if initial in ("spin_up", "spin_down"):
            if dim != 2:
                raise ConfigError(f"{initial} needs a two-level system")
            rho = SPIN_UP if initial == "spin_up" else SPIN_DOWN
        elif initial == "vacuum":
            rho = fock_dm(dim, 0)
        elif isinstance(initial, Mapping) and "fock" in initial:
            if initial["fock"] >= dim:
                raise ConfigError("Fock index beyond truncation")
            rho = fock_dm(dim, initial["fock"])
        else:
            rho = _matrix(initial)
            if rho.shape != (dim, dim):
                raise ConfigError("initial state has the wrong dimension")
            try:
                check_density_matrix(rho)
            except StateInvariantViolation as exc:
                raise ConfigError(f"initial state is not a density matrix: {exc}") from None
        sc.rho0 = rho
        sc.initial_state = {"state": initial, "defaulted": False}
    sc.rho0 = np.array(sc.rho0, dtype=complex)
    return sc


_BUILTIN_OBS = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}


def build_observables(items, dim: int) -> dict[str, np.ndarray]:
    out = {}
    for item in items:
        if isinstance(item, str):
            if item == "number":
                op = number(dim)
            else:
                if dim != 2:
                    raise ConfigError(f"{item} needs a two-level system")
                op = _BUILTIN_OBS[item]
            name = item
        else:
            name, op = item["name"], _matrix(item["op"])
            if op.shape != (dim, dim):
                raise ConfigError(f"observable {name} has the wrong dimension")
        if np.max(np.abs(op - op.conj().T)) > 1e-12:
            raise ConfigError(f"observable {name} is not Hermitian")
        if name in out:
            raise ConfigError(f"duplicate observable {name}")
        out[name] = op
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    name: str
    scenario: Scenario
    t_grid: np.ndarray
    methods: list[dict]
    observables: dict[str, np.ndarray]
    tolerances: Tolerances
    diagnostics: dict = field(default_factory=dict)


def validate_config(raw: Mapping[str, Any]) -> None:
    """Schema check; raises :class:`ConfigError` with the first violation."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {loc}: {exc.message}") from None


def parse_config(raw: Mapping[str, Any], base_tolerances: Tolerances | None = None) -> ExperimentConfig:
    validate_config(raw)
    t_end = float(raw["window"]["t_end"])
    grid_spec = raw["output_grid"]
    if "count" in grid_spec:
        grid = np.linspace(0.0, t_end, grid_spec["count"])
    else:
        grid = np.asarray(grid_spec["times"], dtype=float)
        if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > t_end:
            raise ConfigError("output times must be increasing and inside the window")
    tols = base_tolerances or load_tolerances()
    overrides = dict(raw.get("tolerances", {}))
    if "tol_p" in overrides:
        overrides["positivity"] = overrides.pop("tol_p")
    try:
        tols = tols.with_overrides(**overrides)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    scenario = build_scenario(raw["scenario"], raw.get("initial_state"))
    obs = build_observables(raw["observables"], scenario.generator.dim)
    diag = {"step_halving": True, "n_max_doubling": True}
    diag.update(raw.get("diagnostics", {}))
    return ExperimentConfig(dict(raw), raw["name"], scenario, grid, list(raw["methods"]), obs, tols, diag)


def load_config(path: str | Path, base_tolerances: Tolerances | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, base_tolerances)


# ---------------------------------------------------------------------------
# running


def method_label(m: Mapping[str, Any]) -> str:
    kind = m["kind"]
    if kind == "extended":
        return f"extended{m['n_max']}"
    if kind == "effective":
        return f"effective{m['order']}"
    if kind == "effective_micromotion":
        return f"effective_micromotion{m['order']}_{m.get('micromotion_order', 1)}"
    return kind


def default_effective_step(sc: Scenario) -> float:
    return effective_max_step(sc.gamma, sc.slow_scale, sc.detuning)


def _run_method(cfg: ExperimentConfig, m: Mapping[str, Any], refine: int = 1, n_max: int | None = None) -> Trajectory:
    sc, tols = cfg.scenario, cfg.tolerances
    g, rho0, obs = sc.generator, sc.rho0, cfg.observables
    kind = m["kind"]
    if kind == "exact":
        icfg = IntegratorConfig(cfg.t_grid, m.get("steps_per_fast_period", DEFAULT_EXACT_SPP) * refine)
        return propagate_exact(g, rho0, icfg, obs, tols)
    if kind == "extended":
        icfg = IntegratorConfig(cfg.t_grid, m.get("steps_per_fast_period", DEFAULT_EXTENDED_SPP) * refine)
        return propagate_extended(g, rho0, n_max or m["n_max"], icfg, obs, tols)
    step = m.get("max_step", default_effective_step(sc)) / refine
    icfg = IntegratorConfig(cfg.t_grid, max_step=step)
    return propagate_effective(g, rho0, icfg, m["order"], kind == "effective_micromotion",
                               m.get("micromotion_order", 1), obs, tols)


@dataclass
class MethodResult:
    label: str
    trajectory: Trajectory
    diagnostics: dict
    wall_clock: float


def run_method(cfg: ExperimentConfig, m: Mapping[str, Any]) -> MethodResult:
    """Run one method plus its convergence diagnostics.

    Raises the numerical error of the failed invariant; a step-halving or
    ``n_max``-doubling delta above ``tolerances.convergence`` is a failure.
    """
    from .errors import TruncationNotConverged

    start = time.perf_counter()
    traj = _run_method(cfg, m)
    diag: dict[str, float] = {}
    tol = cfg.tolerances.convergence
    if cfg.diagnostics.get("step_halving", True):
        finer = _run_method(cfg, m, refine=2)
        diag["step_halving_delta"] = truncation_delta(traj, finer)
        if diag["step_halving_delta"] > tol:
            raise TruncationNotConverged(
                f"{method_label(m)}: step halving moved observables by {diag['step_halving_delta']:.3e} > {tol:.1e}"
            )
    if m["kind"] == "extended" and cfg.diagnostics.get("n_max_doubling", True):
        wider = _run_method(cfg, m, n_max=2 * m["n_max"])
        diag["n_max_doubling_delta"] = truncation_delta(traj, wider)
        if diag["n_max_doubling_delta"] > tol:
            raise TruncationNotConverged(
                f"{method_label(m)}: doubling n_max moved observables by {diag['n_max_doubling_delta']:.3e}"
            )
    diag.update(trajectory_report(traj.states))
    if cfg.scenario.model == "oscillator" and m["kind"] in ("exact", "extended"):
        diag["fock_tail"] = check_fock_truncation(traj.states, cfg.tolerances.fock_tail)
    return MethodResult(method_label(m), traj, diag, time.perf_counter() - start)


def write_csv(path: Path, traj: Trajectory, names: list[str]) -> None:
    data = np.column_stack([traj.times] + [traj.observables[n] for n in names])
    header = ",".join(["t"] + names)
    np.savetxt(path, data, fmt="%.12g", delimiter=",", header=header, comments="")


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, version: str = "") -> dict:
    """Run every method, then write CSVs and the manifest together."""
    out = Path(out_dir)
    t0 = time.perf_counter()
    results = [run_method(cfg, m) for m in cfg.methods]
    names = list(cfg.observables)
    out.mkdir(parents=True, exist_ok=True)
    manifest_name = f"{cfg.name}_manifest.json"
    csvs = []
    for res in results:
        fname = f"{cfg.name}_{res.label}.csv"
        write_csv(out / fname, res.trajectory, names)
        csvs.append(fname)
    manifest = {
        "manifest": manifest_name,
        "library_version": version,
        "schema_version": SCHEMA_VERSION,
        "config": cfg.raw,
        "initial_state": cfg.scenario.initial_state,
        "tolerances": cfg.tolerances.as_dict(),
        "wall_clock_seconds": time.perf_counter() - t0,
        "methods": [
            {"label": r.label, "csv": f"{cfg.name}_{r.label}.csv", "method_tag": r.trajectory.method_tag,
             "wall_clock_seconds": r.wall_clock, "diagnostics": r.diagnostics,
             "meta": _jsonable(r.trajectory.meta)}
            for r in results
        ],
        "csv_files": csvs,
    }
    (out / manifest_name).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# comparison


def read_csv(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    path = Path(path)
    header = path.read_text().splitlines()[0].split(",")
    if header[0] != "t":
        raise ConfigError(f"{path}: first column must be t")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], {name: data[:, k + 1] for k, name in enumerate(header[1:])}


def _antiderivative(t: np.ndarray, y: np.ndarray):
    """Exact integral of the piecewise-linear interpolant, as a callable of x."""
    seg = 0.5 * np.diff(t) * (y[1:] + y[:-1])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    slope = np.diff(y) / np.diff(t)

    def at(x):
        x = np.clip(x, t[0], t[-1])
        k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, len(t) - 2)
        dx = x - t[k]
        return cum[k] + y[k] * dx + 0.5 * slope[k] * dx * dx

    return at


def sliding_mean(t: np.ndarray, y: np.ndarray, period) -> np.ndarray:
    """Centered mean over a window of one (local) period, clipped at the ends."""
    if len(t) < 2:
        return np.array(y, dtype=float)
    width = np.broadcast_to(np.asarray(period(t) if callable(period) else period, dtype=float), t.shape)
    lo = np.clip(t - 0.5 * width, t[0], t[-1])
    hi = np.clip(t + 0.5 * width, t[0], t[-1])
    F = _antiderivative(t, y)
    span = hi - lo
    out = np.array(y, dtype=float)
    ok = span > 0
    out[ok] = (F(hi[ok]) - F(lo[ok])) / span[ok]
    return out


def period_from_manifest(csv_path: str | Path) -> Callable[[np.ndarray], np.ndarray] | None:
    """Local fast period ``2 pi / omega_eff(t)`` recovered from the sibling manifest's config echo."""
    csv_path = Path(csv_path)
    for man in sorted(csv_path.parent.glob("*_manifest.json")):
        try:
            data = json.loads(man.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if csv_path.name in data.get("csv_files", []):
            sc = build_scenario(data["config"]["scenario"], data["config"].get("initial_state"))
            return sc.fast_period
    return None


def compare(a: str | Path, b: str | Path, mode: str = "pointwise", period=None) -> dict:
    """Max deviation per shared observable, pointwise and (when a period is known) envelope."""
    if mode not in ("pointwise", "envelope"):
        raise ConfigError(f"unknown mode {mode!r}")
    ta, ca = read_csv(a)
    tb, cb = read_csv(b)
    if ta.shape != tb.shape or np.max(np.abs(ta - tb)) > 1e-9 * max(1.0, float(np.max(np.abs(ta)))):
        raise ShapeMismatch("time grids differ")
    shared = [k for k in ca if k in cb]
    if not shared:
        raise ShapeMismatch("no shared observable columns")
    summary: dict[str, Any] = {"mode": mode, "pointwise": {}, "envelope": {}}
    for k in shared:
        summary["pointwise"][k] = float(np.max(np.abs(ca[k] - cb[k])))
    if period is None:
        period = period_from_manifest(a) or period_from_manifest(b)
    if period is None and mode == "envelope":
        raise ConfigError("envelope mode needs a manifest next to the CSV or an explicit period")
    if period is not None:
        for k in shared:
            summary["envelope"][k] = float(np.max(np.abs(sliding_mean(ta, ca[k], period)
                                                          - sliding_mean(tb, cb[k], period))))
    summary["max"] = max(summary[mode].values())
    return summary
