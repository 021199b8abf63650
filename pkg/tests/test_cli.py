import copy
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from floqgen import cli
from floqgen.errors import ConfigError
from floqgen.experiment import method_label, parse_config, read_csv, sliding_mean

SPIN = {
    "schema_version": 1,
    "name": "tiny",
    "scenario": {"type": "spin", "variant": "fast_rotation", "alpha": 0.5, "gamma": 0.1,
                 "ramp": {"kind": "tanh_ramp", "w_i": 2.0, "w_f": 3.0, "t0": 5, "tau": 2}},
    "window": {"t_start": 0, "t_end": 10},
    "output_grid": {"count": 101},
    "methods": [{"kind": "exact"}, {"kind": "effective", "order": 1},
                {"kind": "effective_micromotion", "order": 2, "micromotion_order": 1}],
    "observables": ["sigma_z", "sigma_x"],
}

OSC = {
    "schema_version": 1,
    "name": "osc",
    "scenario": {"type": "oscillator", "omega0": 1.0, "drive_amplitude": 0.05,
                 "drive_freq": {"kind": "constant", "w_i": 1.01}, "gamma": 0.01, "fock_dim": 12},
    "window": {"t_end": 10},
    "output_grid": {"count": 21},
    "methods": [{"kind": "exact"}],
    "observables": ["number"],
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, cfg, out="out"):
    return cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / out)])


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    assert _run(tmp, SPIN) == 0
    return tmp / "out"


def test_run_writes_csv_and_manifest(tiny_run):
    man = json.loads((tiny_run / "tiny_manifest.json").read_text())
    assert man["csv_files"] == ["tiny_exact.csv", "tiny_effective1.csv", "tiny_effective_micromotion2_1.csv"]
    assert man["initial_state"] == {"state": "spin_up", "defaulted": True}
    assert man["config"]["name"] == "tiny" and man["schema_version"] == 1
    assert man["tolerances"]["convergence"] == 1e-6
    exact = man["methods"][0]
    assert exact["diagnostics"]["step_halving_delta"] < 1e-6
    assert exact["diagnostics"]["min_eigenvalue"] >= -1e-8
    assert man["wall_clock_seconds"] > 0
    t, cols = read_csv(tiny_run / "tiny_exact.csv")
    assert (tiny_run / "tiny_exact.csv").read_text().splitlines()[0] == "t,sigma_z,sigma_x"
    assert len(t) == 101 and cols["sigma_z"][0] == 1.0


def test_csv_is_bit_stable(tmp_path, tiny_run):
    assert _run(tmp_path, SPIN, "again") == 0
    for name in ("tiny_exact.csv", "tiny_effective1.csv", "tiny_effective_micromotion2_1.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (tiny_run / name).read_bytes()


def test_compare_identical_is_zero(tiny_run, capsys):
    csv = str(tiny_run / "tiny_exact.csv")
    assert cli.main(["compare", csv, csv, "--json"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["max"] == 0.0
    assert set(summary["pointwise"]) == {"sigma_z", "sigma_x"}


def test_compare_envelope_uses_manifest_period(tiny_run, capsys):
    a, b = str(tiny_run / "tiny_exact.csv"), str(tiny_run / "tiny_effective1.csv")
    assert cli.main(["compare", a, b, "--mode", "envelope", "--json"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert 0 < summary["envelope"]["sigma_z"] < summary["pointwise"]["sigma_z"]


def test_compare_envelope_needs_period(tmp_path, tiny_run):
    for name in ("a.csv", "b.csv"):
        (tmp_path / name).write_bytes((tiny_run / "tiny_exact.csv").read_bytes())
    assert cli.main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--mode", "envelope"]) == 2
    assert cli.main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--mode", "envelope",
                     "--period", "2.0"]) == 0


def test_compare_grid_mismatch(tmp_path, tiny_run):
    (tmp_path / "short.csv").write_text("t,sigma_z\n0,1\n1,0.5\n")
    assert cli.main(["compare", str(tiny_run / "tiny_exact.csv"), str(tmp_path / "short.csv")]) == 2


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(methods=[]),
    lambda c: c.update(schema_version=2),
    lambda c: c.update(extra=1),
    lambda c: c["window"].update(t_start=1),
    lambda c: c.update(methods=[{"kind": "extended"}]),
    lambda c: c.update(methods=[{"kind": "effective"}]),
    lambda c: c.update(observables=["number", "number"]),
    lambda c: c.update(observables=[{"name": "bad", "op": {"re": [[0, 1], [0, 0]]}}]),
    lambda c: c.update(initial_state={"re": [[2, 0], [0, -1]]}),
    lambda c: c.update(initial_state="vacuum_x"),
    lambda c: c.update(tolerances={"no_such_tol": 1.0}),
    lambda c: c["scenario"].update(variant="spiral"),
])
def test_config_errors_exit_2(tmp_path, mutate):
    cfg = copy.deepcopy(SPIN)
    mutate(cfg)
    assert _run(tmp_path, cfg) == 2


def test_missing_and_malformed_config(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["run", str(tmp_path / "bad.json")]) == 2


def test_forced_positivity_failure_exit_3(tmp_path, capsys):
    cfg = copy.deepcopy(OSC)
    cfg["tolerances"] = {"tol_p": 1e-15}
    cfg["diagnostics"] = {"step_halving": False}
    assert _run(tmp_path, cfg) == 3
    assert "min eigenvalue" in capsys.readouterr().err


def test_oscillator_run_records_fock_tail(tmp_path):
    assert _run(tmp_path, OSC) == 0
    man = json.loads((tmp_path / "out" / "osc_manifest.json").read_text())
    assert man["methods"][0]["diagnostics"]["fock_tail"] < 1e-8
    assert man["initial_state"]["state"] == "vacuum"


def test_generic_scenario_with_extended_method(tmp_path):
    cfg = {
        "schema_version": 1, "name": "gen",
        "scenario": {"type": "generic", "dim": 2, "phase": {"kind": "constant", "w_i": 5.0},
                     "hamiltonian": {"1": {"re": [[0, 0.3], [0, 0]]}, "-1": {"re": [[0, 0], [0.3, 0]]},
                                     "0": {"re": [[0.2, 0], [0, -0.2]]}},
                     "jumps": [{"op": {"re": [[0, 0], [1, 0]]}, "rate": 0.1}]},
        "initial_state": {"re": [[0.5, 0.5], [0.5, 0.5]]},
        "window": {"t_end": 5}, "output_grid": {"times": [0, 1, 2.5, 5]},
        "methods": [{"kind": "exact"}, {"kind": "extended", "n_max": 4}],
        "observables": ["sigma_z", {"name": "px", "op": {"re": [[0, 1], [1, 0]]}}],
    }
    assert _run(tmp_path, cfg) == 0
    man = json.loads((tmp_path / "out" / "gen_manifest.json").read_text())
    ext = man["methods"][1]
    assert ext["label"] == "extended4" and ext["diagnostics"]["n_max_doubling_delta"] < 1e-6
    assert man["initial_state"]["defaulted"] is False
    t_a, a = read_csv(tmp_path / "out" / "gen_exact.csv")
    _, b = read_csv(tmp_path / "out" / "gen_extended4.csv")
    assert np.allclose(t_a, [0, 1, 2.5, 5])
    assert np.max(np.abs(a["px"] - b["px"])) < 1e-6


def test_output_times_must_be_increasing():
    cfg = copy.deepcopy(SPIN)
    cfg["output_grid"] = {"times": [0, 2, 1]}
    with pytest.raises(ConfigError):
        parse_config(cfg)


def test_method_labels():
    assert method_label({"kind": "exact"}) == "exact"
    assert method_label({"kind": "extended", "n_max": 16}) == "extended16"
    assert method_label({"kind": "effective", "order": 2}) == "effective2"
    assert method_label({"kind": "effective_micromotion", "order": 2}) == "effective_micromotion2_1"


def test_sliding_mean_removes_period_and_keeps_constants():
    t = np.linspace(0, 20, 2001)
    assert np.max(np.abs(sliding_mean(t, np.full_like(t, 3.0), 2.0) - 3.0)) < 1e-12
    osc = np.sin(2 * math.pi * t / 2.0)
    inner = (t > 1.0) & (t < 19.0)
    assert np.max(np.abs(sliding_mean(t, osc, 2.0)[inner])) < 1e-5
    lin = 0.5 * t
    assert np.max(np.abs(sliding_mean(t, lin, 2.0)[inner] - lin[inner])) < 1e-12


def test_validate_passes(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.strip().endswith("checks passed")


def test_list_configs(capsys):
    assert cli.main(["list-configs"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.strip().splitlines()]
    assert names == ["fig1a", "fig1b", "fig1c", "fig1d", "fig2", "fig3a", "fig3b", "fig3c", "fig3d",
                     "fig4a", "fig4b", "fig4c", "fig4d"]


def test_bundled_configs_parse():
    for name in ("fig1a", "fig2", "fig3c", "fig4c"):
        cfg = parse_config(json.loads(cli.bundled_config(name).read_text()))
        assert cfg.name == name and len(cfg.methods) >= 2


def test_console_entry_point_exit_code(tmp_path):
    cfg = copy.deepcopy(SPIN)
    cfg["methods"] = []
    path = _write(tmp_path, cfg)
    proc = subprocess.run([sys.executable, "-m", "floqgen.cli", "run", path], capture_output=True, text=True)
    assert proc.returncode == 2 and "schema violation" in proc.stderr


def test_validate_fails_under_forced_positivity_tolerance(tmp_path, monkeypatch, capsys):
    (tmp_path / "tol.json").write_text(json.dumps({"tol_p": 1e-15}))
    monkeypatch.setenv("FLOQGEN_TOL_FILE", str(tmp_path / "tol.json"))
    assert cli.main(["validate"]) == 3
    fails = [line for line in capsys.readouterr().out.splitlines() if line.startswith("FAIL")]
    assert len(fails) == 1 and "min eigenvalue" in fails[0]
