import csv
import json
from pathlib import Path

import numpy as np
import pytest

from qtraj import io
from qtraj.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main, validate_config
from qtraj.config import build_setup, config_from_dict, load_config, with_overrides
from qtraj.discrete import sample_ensemble
from qtraj.errors import ConfigError
from qtraj.linalg import matrix_from_json, matrix_to_json
from qtraj.interaction import build_from_coefficients
from qtraj.models import amplitude_damping_coefficients, counting_observable, excited

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.json"))
AD_CONFIG = next(p for p in CONFIGS if p.stem == "amplitude_damping_jump")


def raw_config():
    return json.loads(AD_CONFIG.read_text())


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_bundled_configs_exist():
    assert {p.stem for p in CONFIGS} >= {"amplitude_damping_jump", "amplitude_damping_diffusive", "mixed",
                                         "detuned_jump", "detuned_diffusive"}


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_bundled_configs_validate(path):
    checks = validate_config(load_config(path))
    assert checks and all(c["passed"] for c in checks), [c for c in checks if not c["passed"]]


def test_validate_reports_non_orthogonal_projectors(tmp_path):
    raw = raw_config()
    raw["observable"]["projectors"][1] = raw["observable"]["projectors"][0]
    assert main(["validate", "--config", write(tmp_path, raw), "--out", str(tmp_path), "--quiet"]) == EXIT_CHECK
    rep = json.loads((tmp_path / "validate" / "validate_report.json").read_text())
    failed = {c["name"] for c in rep["checks"] if not c["passed"]}
    assert "projector_axioms" in failed and not rep["passed"]


def test_validate_reports_non_hermitian_hamiltonian(tmp_path):
    raw = raw_config()
    raw["model"]["hamiltonian"] = matrix_to_json(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert main(["validate", "--config", write(tmp_path, raw), "--out", str(tmp_path), "--quiet"]) == EXIT_CHECK
    rep = json.loads((tmp_path / "validate" / "validate_report.json").read_text())
    assert any(c["name"] == "hamiltonian_hermitian" and not c["passed"] for c in rep["checks"])


def test_validate_reports_bad_initial_state(tmp_path):
    raw = raw_config()
    raw["initial_state"] = [[1.0, 0.0], [0.0, 1.0]]
    cfg = load_config(write(tmp_path, raw))
    assert any(c["name"] == "initial_state" and not c["passed"] for c in validate_config(cfg))


def test_zero_paths_is_a_config_error(tmp_path, capsys):
    code = main(["discrete", "--config", str(AD_CONFIG), "--out", str(tmp_path), "--paths", "0", "--quiet"])
    assert code == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_missing_file_is_a_config_error(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_model_is_a_config_error_for_simulation(tmp_path):
    raw = raw_config()
    raw["model"]["hamiltonian"] = [[0.0, 1.0], [0.0, 0.0]]
    assert main(["master", "--config", write(tmp_path, raw), "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG


def test_master_subcommand_amplitude_damping(tmp_path):
    assert main(["master", "--config", str(AD_CONFIG), "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    rep = json.loads((tmp_path / "master" / "master.json").read_text())
    last = rep["solutions"][-1]
    assert last["time"] == 1.0
    assert matrix_from_json(last["state"])[1, 1].real == pytest.approx(np.exp(-1.0), abs=1e-10)
    with (tmp_path / "master" / "master.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["re_11"]) == pytest.approx(np.exp(-1.0), abs=1e-10)
    meta = json.loads((tmp_path / "master" / "metadata.json").read_text())
    assert meta["command"] == "master" and meta["exit_code"] == 0


@pytest.mark.parametrize("command", ["discrete", "sde"])
def test_simulation_subcommands_are_byte_identical(tmp_path, command):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main([command, "--config", str(AD_CONFIG), "--out", str(out), "--paths", "20", "--quiet"]) == EXIT_OK
        outs.append(out / command)
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "metadata.json")
    assert files and files == sorted(p.name for p in outs[1].iterdir() if p.name != "metadata.json")
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_seed_override_changes_output(tmp_path):
    for k, seed in enumerate(("1", "2")):
        main(["discrete", "--config", str(AD_CONFIG), "--out", str(tmp_path / str(k)), "--paths", "20",
              "--seed", seed, "--quiet"])
    a = (tmp_path / "0" / "discrete" / "discrete_summary.json").read_text()
    b = (tmp_path / "1" / "discrete" / "discrete_summary.json").read_text()
    assert a != b


def test_seed_is_mandatory():
    raw = raw_config()
    del raw["seed"]
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(raw)
    raw["seed"] = True
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(raw)


def test_unknown_and_missing_keys_are_rejected():
    raw = raw_config()
    raw["discrete"]["steps"] = 3
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict(raw)
    raw = raw_config()
    del raw["model"]["lk0"]
    with pytest.raises(ConfigError, match="lk0"):
        config_from_dict(raw)
    raw = raw_config()
    raw["model"]["type"] = "kraus"
    with pytest.raises(ConfigError, match="model.type"):
        config_from_dict(raw)


def test_shape_errors_are_rejected():
    raw = raw_config()
    raw["initial_state"] = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    with pytest.raises(ConfigError, match="initial_state"):
        config_from_dict(raw)
    raw = raw_config()
    raw["observable"]["eigenvalues"] = [0.0]
    with pytest.raises(ConfigError, match="eigenvalue"):
        config_from_dict(raw)
    raw = raw_config()
    raw["model"]["hamiltonian"] = {"rows": 2, "cols": 2, "re": [0.0]}
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_bad_tolerance_key_is_rejected():
    raw = raw_config()
    raw["tolerances"] = {"nonsense": 1.0}
    with pytest.raises(ConfigError, match="tolerances"):
        config_from_dict(raw)


def test_overrides():
    cfg = with_overrides(load_config(AD_CONFIG), seed=7, paths=3)
    assert cfg.seed == 7 and cfg.discrete.paths == cfg.sde.paths == cfg.converge.paths == 3
    assert load_config(AD_CONFIG).discrete.paths == 200


def test_nested_list_matrices_are_accepted():
    raw = raw_config()
    raw["initial_state"] = [[0.0, 0.0], [0.0, 1.0]]
    assert np.array_equal(config_from_dict(raw).initial_state, excited())


def test_matrix_json_round_trip():
    m = np.array([[1 + 2j, -0.5], [3j, 0.25]])
    assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)


def test_json_writer_is_deterministic(tmp_path):
    obj = {"b": np.float64(0.1), "a": [np.int64(3), np.bool_(True)], "c": np.array([[1j, 0], [0, 1]]),
           "d": float("nan")}
    a = io.write_json(tmp_path / "a.json", obj).read_text()
    b = io.write_json(tmp_path / "b.json", dict(reversed(list(obj.items())))).read_text()
    assert a == b
    back = json.loads(a)
    assert back["b"] == 0.1 and back["a"] == [3, True] and back["d"] == "nan"


def test_path_csv_round_trips_floats(tmp_path):
    ens = sample_ensemble(excited(), build_from_coefficients(amplitude_damping_coefficients()),
                          counting_observable(), 50, 1.0, paths=2, seed=1, record_every=5)
    path = io.write_path_csv(tmp_path / "p.csv", ens.time_grid, ens.states[0], io.discrete_marks(ens, 0))
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(ens.steps) and rows[0]["outcome"] == ""
    for row, rho in zip(rows, ens.states[0]):
        assert float(row["re_11"]) == rho[1, 1].real and float(row["im_01"]) == rho[0, 1].imag


def test_ensemble_summary_fields():
    ens = sample_ensemble(excited(), build_from_coefficients(amplitude_damping_coefficients()),
                          counting_observable(), 50, 1.0, paths=4, seed=1, record_every=25)
    s = io.ensemble_summary(ens)
    assert s["paths"] == 4 and s["kind"] == "discrete" and len(s["per_time"]) == len(ens.steps)
    assert sum(s["outcome_counts"]) == 4 * 50


def test_hamiltonian_setup_is_trace_preserving():
    s = build_setup(load_config(AD_CONFIG.with_name("detuned_jump.json")))
    assert s.coeffs.claim2_residual() <= 1e-14
    assert s.coeffs.residuals
