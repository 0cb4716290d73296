import json
from pathlib import Path

import numpy as np
import pytest

from perron_lab.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from perron_lab.config import ConfigError, ExperimentConfig, make_data

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, name, cfg):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_shipped_configs_validate():
    files = sorted(CONFIGS.glob("*.json"))
    assert len(files) >= 10
    for f in files:
        cfg = ExperimentConfig.load(f)
        cfg.validate(need_experiment=f.stem != "solve")


def test_config_json_round_trip():
    cfg = ExperimentConfig.load(CONFIGS / "invariance-point.json")
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@pytest.mark.parametrize("bad", [
    {"experiment": "nope"},
    {"experiment": "invariance", "operator": {"p": 0.5}},
    {"experiment": "invariance", "mesh_levels": []},
    {"experiment": "invariance", "K": 0},
    {"experiment": "invariance", "tol": -1.0},
    {"experiment": "invariance", "domain": {"kind": "disc", "radius": -1}},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad).validate()


def test_config_rejects_unknown_keys_and_bad_json():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "invariance", "typo": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


def test_data_registry():
    assert make_data({"id": "affine", "params": {"a": 2.0, "c": 1.0}})(1.0, 5.0) == 3.0
    assert make_data({"id": "closed-form", "params": {"kind": "harmonic-poly", "params": [2]}})(1.0, 1.0) == 0.0
    with pytest.raises(ConfigError):
        make_data({"id": "missing"})
    with pytest.raises(ConfigError):
        make_data({"id": "affine", "params": {"z": 1}})


def test_solve_exit_ok_and_byte_identical(tmp_path):
    cfg = write(tmp_path, "solve", {"operator": {"p": 3.0}, "data": {"id": "quadratic"}, "mesh_levels": [0.125]})
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["solve", "--config", cfg, "--out", str(o)]) == EXIT_OK
    a, b = ((o / "solve.csv").read_bytes() for o in outs)
    assert a == b
    rows = a.decode().splitlines()
    assert rows[0] == "node_id,x,y,u" and len(rows) == 82
    assert json.loads((outs[0] / "summary.json").read_text())["passed"]


def test_experiment_tables_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "md", {"experiment": "monotone-data", "operator": {"p": 3.0},
                                 "mesh_levels": [0.125], "options": {"levels": 3}})
    for o in ("a", "b"):
        assert main(["experiment", "--config", cfg, "--out", str(tmp_path / o)]) == EXIT_OK
    assert (tmp_path / "a" / "monotone_data.csv").read_bytes() == (tmp_path / "b" / "monotone_data.csv").read_bytes()


def test_assertion_failure_exit(tmp_path):
    cfg = write(tmp_path, "hg", {"experiment": "uniqueness", "operator": {"p": 2.0}, "data": {"id": "x"},
                                 "perturbation": {"segments": [[[0, 0], [1, 0]]]}, "mesh_levels": [0.125],
                                 "options": {"candidate": "hg"}})
    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_ASSERT
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "fail"


def test_solver_failure_exit(tmp_path):
    cfg = write(tmp_path, "perron", {"operator": {"p": 2.0}, "data": {"id": "x"}, "K": 2,
                                     "perturbation": {"segments": [[[0, 0], [1, 0]]]}, "mesh_levels": [0.125]})
    assert main(["perron", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["status"] == "solver-failure"


def test_config_error_exits(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = write(tmp_path, "bad", {"operator": {"p": 1.0}})
    assert main(["solve", "--config", bad]) == EXIT_CONFIG
    unk = write(tmp_path, "unk", {"experiment": "nope"})
    assert main(["experiment", "--config", unk]) == EXIT_CONFIG
    nodata = write(tmp_path, "nodata", {"data": {"id": "nope"}, "mesh_levels": [0.25]})
    assert main(["solve", "--config", nodata, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_thread_env_error(tmp_path, monkeypatch):
    cfg = write(tmp_path, "solve", {"mesh_levels": [0.25]})
    monkeypatch.setenv("PERRON_LAB_THREADS", "-1")
    assert main(["solve", "--config", cfg]) == EXIT_CONFIG


def test_oracle_commands(tmp_path):
    cf = write(tmp_path, "cf", {"options": {"form": {"kind": "poisson-kernel", "params": [0.0]},
                                            "points": [[0, 0], [0, 1]]}})
    assert main(["oracle", "closed-form", "--config", cf, "--out", str(tmp_path / "cf")]) == EXIT_OK
    text = (tmp_path / "cf" / "closed_form.csv").read_text().splitlines()
    assert text[1] == "0.0,0.0,1.0" and text[2] == "0.0,1.0,0.0"
    wos = write(tmp_path, "wos", {"domain": {"kind": "disc"}, "data": {"id": "x"}, "seed": 3,
                                  "options": {"samples": 2000, "points": [[0.1, 0.2]]}})
    assert main(["oracle", "wos", "--config", wos, "--out", str(tmp_path / "w")]) == EXIT_OK
    bf = write(tmp_path, "bf", {"data": {"id": "zero"}, "mesh_levels": [0.25]})
    assert main(["oracle", "bf-obstacle", "--config", bf, "--out", str(tmp_path / "bf")]) == EXIT_OK
    u = np.loadtxt(tmp_path / "bf" / "bf_obstacle.csv", delimiter=",", skiprows=1)[:, 3]
    assert u.max() == pytest.approx(0.25)


def test_obstacle_and_capacity_commands(tmp_path):
    ob = write(tmp_path, "ob", {"operator": {"p": 2.0}, "data": {"id": "zero"}, "mesh_levels": [0.125]})
    assert main(["obstacle", "--config", ob, "--out", str(tmp_path / "ob")]) == EXIT_OK
    cap = write(tmp_path, "cap", {"mesh_levels": [0.5, 0.25]})
    assert main(["capacity", "--config", cap, "--out", str(tmp_path / "cap")]) == EXIT_OK
    vals = np.loadtxt(tmp_path / "cap" / "capacity.csv", delimiter=",", skiprows=1, usecols=3)
    assert vals[1] < vals[0]
