import math
from pathlib import Path

import orjson
import pandas as pd
import pytest

from app.cli import main
from app.core.errors import ConfigInvalid
from app.models.schemas import MaterialBlock, RunConfig, SolverBlock, TimeBlock
from app.services.harness import load_config, parse_config, prepare, run_oracle, run_simulate, validate, write_config

SMALL = """
[mesh]
extents = 1.0, 1.0
resolution = 2, 2

[material]
mu_C = 1.0
c = 0.1

[data]
g = 0.5; 0.1
theta0 = 1

[time]
T = 0.2
n_steps = 2

[solver]
outer_tol = 1e-11
inner_tol = 1e-12

[output]
formats = csv, vtk
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _last_json(capsys):
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    return orjson.loads(lines[-1])


def test_parse_small_config():
    config = parse_config(SMALL)
    assert config.mesh.resolution == [2, 2]
    assert config.material.mu_C == 1.0
    assert config.data.g == "0.5; 0.1"
    assert config.output.formats == ["csv", "vtk"]
    assert config.time.n_steps == 2


def test_write_then_parse_is_identity():
    config = RunConfig(material=MaterialBlock(mu_D=1.7, alpha=0.2, flow="reg_von_mises", k0=0.3),
                       time=TimeBlock(T=0.1, n_steps=7), solver=SolverBlock(omega=0.5))
    assert parse_config(write_config(config)) == config


def test_unknown_key_gets_a_suggestion():
    with pytest.raises(ConfigInvalid) as exc:
        parse_config("[material]\nkapa = 2\n[tim]\nT = 1\n")
    joined = " | ".join(exc.value.violations)
    assert "did you mean 'kappa'" in joined
    assert "did you mean 'time'" in joined


def test_alpha_violation_is_named():
    out = validate("[material]\nalpha = 0.6\n")
    assert not out.ok
    assert any("α < 1/2" in v for v in out.violations)


def test_incompatible_initial_temperature_aborts():
    text = "[material]\nr = 4\n[data]\ntheta0 = 1\nh = 1\n"
    with pytest.raises(ConfigInvalid) as exc:
        prepare(parse_config(text))
    assert any(v.startswith("compatibility") for v in exc.value.violations)
    # below the threshold the same data is accepted
    assert validate("[data]\ntheta0 = 1\nh = 1\n").ok


def test_bad_catalog_term_reported():
    out = validate("[data]\nb = cosine_product(1, 1, 0); 0\n")
    assert not out.ok and any(v.startswith("data:") for v in out.violations)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "nope.ini")


def test_simulate_writes_artifacts(tmp_path):
    summary = run_simulate(parse_config(SMALL), tmp_path / "a")
    assert summary.converged and summary.status == "converged"
    for key in ("mesh_vertices", "vertices_00000", "elements_00002", "vtk_00002", "diagnostics", "summary"):
        assert key in summary.files
    diag = pd.read_csv(summary.files["diagnostics"])
    assert len(diag) == 2
    assert "energy_residual [energy/time]" in diag.columns
    stored = orjson.loads((tmp_path / "a" / "summary.json").read_bytes())
    assert stored["outer_iterations"] == summary.outer_iterations
    snap = pd.read_csv(summary.files["vertices_00002"])
    assert "theta [temperature]" in snap.columns and len(snap) == 9


def test_simulate_is_deterministic(tmp_path):
    config = parse_config(SMALL)
    a = run_simulate(config, tmp_path / "a")
    b = run_simulate(config, tmp_path / "b")
    assert a.deltas == b.deltas and a.theta_norm_LpLr == b.theta_norm_LpLr
    assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert (tmp_path / "a" / "snapshots" / "elements_00002.csv").read_bytes() == \
        (tmp_path / "b" / "snapshots" / "elements_00002.csv").read_bytes()


def test_oracle_scenario(tmp_path):
    config = load_config(Path(__file__).resolve().parents[1] / "configs" / "tiny.ini")
    assert config.material.k1 > 0.0
    report = run_oracle(config, tmp_path)
    assert report.status == "ok"
    assert report.unknowns == 14
    assert max(report.max_diff.values()) <= 1e-8
    assert len(report.yielding) == 2 and all(0 <= n <= 2 for n in report.yielding)
    assert (tmp_path / "oracle.json").is_file()


GOLDEN = Path(__file__).resolve().parent / "golden"
PINNED = ("deltas", "theta_norm_LpLr", "sigma_max_Lq", "eps_p_max_Lq")


def test_coupled_regression_matches_golden(tmp_path):
    tiny = load_config(Path(__file__).resolve().parents[1] / "configs" / "tiny.ini")
    oracle = run_oracle(tiny, tmp_path / "oracle")
    assert oracle.status == "ok" and max(oracle.max_diff.values()) <= 1e-8
    summary = run_simulate(load_config(GOLDEN / "coupled_4x4.ini"), tmp_path / "run")
    assert summary.converged
    values = {key: getattr(summary, key) for key in PINNED}
    pinned = GOLDEN / "coupled_4x4_summary.json"
    if not pinned.exists():
        pinned.write_bytes(orjson.dumps(values, option=orjson.OPT_INDENT_2))
        pytest.skip(f"recorded {pinned.name}; commit it to pin the regression values")
    golden = orjson.loads(pinned.read_bytes())
    assert set(golden) == set(PINNED)
    assert len(values["deltas"]) == len(golden["deltas"])
    for key in PINNED:
        assert values[key] == pytest.approx(golden[key], abs=1e-8, rel=0.0), key


def test_cli_validate_and_simulate(tmp_path, capsys):
    path = _write(tmp_path, SMALL)
    assert main(["validate", str(path)]) == 0
    assert _last_json(capsys)["status"] == "ok"
    assert main(["simulate", str(path), "--output", str(tmp_path / "out"), "--single-thread"]) == 0
    payload = _last_json(capsys)
    assert payload["status"] == "ok" and payload["summary"].endswith("summary.json")


def test_cli_config_invalid_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "[material]\nalpha = 0.6\n")
    assert main(["validate", str(path)]) == 2
    payload = _last_json(capsys)
    assert payload["status"] == "config-invalid"


def test_cli_not_converged_exit_code(tmp_path, capsys):
    text = SMALL.replace("outer_tol = 1e-11", "outer_tol = 1e-15\nmax_outer = 1\nmax_window_splits = 0")
    path = _write(tmp_path, text)
    assert main(["simulate", str(path), "--output", str(tmp_path / "out")]) == 4
    assert _last_json(capsys)["status"] == "not-converged"


def test_shipped_example_config_is_valid():
    path = Path(__file__).resolve().parents[1] / "configs" / "example.ini"
    config = load_config(path)
    assert config.material.flow == "reg_von_mises"
    assert validate(path.read_text(encoding="utf-8")).ok


def test_decoupled_run_follows_heat_decay(tmp_path):
    text = """
[mesh]
resolution = 8, 8
[material]
c = 0
flow = none
[data]
theta0 = cos_product(1, 1, 0)
[time]
T = 0.1
n_steps = 20
"""
    summary = run_simulate(parse_config(text), tmp_path)
    assert summary.converged and summary.outer_iterations <= 2
    snap = pd.read_csv(summary.files["vertices_00020"])
    corner = snap[(snap["x1 [length]"] == 0.0) & (snap["x2 [length]"] == 0.0)]
    # cos(πx1) decays like exp(−κπ²t)
    assert corner["theta [temperature]"].iloc[0] == pytest.approx(math.exp(-math.pi ** 2 * 0.1), abs=0.03)
