# Copyright 2021 The Chemoflow Authors.

import copy
import json
import math
import os

import numpy as np
import pytest

from chemoflow.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_SOLVER_ERROR,
    OUTPUT_ENV,
    cmd_sweep,
    load_config,
    main,
    parse_config,
    parse_values,
    write_csv,
    write_json,
)
from chemoflow.errors import ConfigError

BASE = {
    "grid": {"R": 4.0, "n": 200},
    "params": {"epsilon": 0.05, "kappa": 1.0},
    "initial": {
        "u": {"weights": [1.0], "means": [0.5], "sigmas": [0.6]},
        "v": {"kind": "gaussian", "amplitude": 0.5, "width": 1.0},
    },
    "stepping": {"tau": 0.05, "t_end": 0.5},
}


def _config(**updates):
    data = copy.deepcopy(BASE)
    for path, value in updates.items():
        *parents, leaf = path.split("__")
        node = data
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return data


def _write(tmp_path, data, name="config.json"):
    path = os.path.join(str(tmp_path), name)
    with open(path, "w") as f:
        json.dump(data, f)
    return path


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config(_config())
        assert cfg.params.phi == "rational"
        assert cfg.params.potential.lambda0 == 1.0
        assert cfg.output.directory == "out"
        assert cfg.output.every_k_steps == 1
        assert cfg.solver.max_sweeps == 200
        assert cfg.n_steps == 10

    def test_ints_are_floats(self):
        cfg = parse_config(_config(grid__R=4, params__kappa=2))
        assert isinstance(cfg.grid.R, float) and cfg.grid.R == 4.0
        assert cfg.model_params().kappa == 2.0

    def test_booleans_are_not_floats(self):
        with pytest.raises(ConfigError) as e:
            parse_config(_config(params__kappa=True))
        assert e.value.path == "params.kappa"

    def test_unknown_key(self):
        data = _config()
        data["extra"] = 1
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(data)

    def test_missing_section(self):
        data = _config()
        del data["stepping"]
        with pytest.raises(ConfigError):
            parse_config(data)

    @pytest.mark.parametrize(
        "updates,path",
        [
            (dict(stepping__tau=0.0), "stepping.tau"),
            (dict(stepping__t_end=0.01), "stepping.t_end"),
            (dict(grid__n=8), "grid.n"),
            (dict(grid__R=-1.0), "grid.R"),
            (dict(params__epsilon=-0.1), "params.epsilon"),
            (dict(params__kappa=0.0), "params.kappa"),
            (dict(params__phi="cubic"), "params.phi"),
            (dict(initial__u__weights=[0.5]), "initial.u.weights"),
            (dict(initial__u__sigmas=[0.0]), "initial.u.sigmas"),
            (dict(initial__v__kind="spike"), "initial.v.kind"),
            (dict(output__every_k_steps=0), "output.every_k_steps"),
            (dict(solver__quantile_m=1), "solver.quantile_m"),
        ],
    )
    def test_error_paths(self, updates, path):
        with pytest.raises(ConfigError) as e:
            parse_config(_config(**updates))
        assert e.value.path == path
        assert str(e.value).startswith(path + ":")

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config([1, 2, 3])

    def test_load(self, tmp_path):
        cfg = load_config(_write(tmp_path, _config()))
        assert cfg.stepping.tau == 0.05

    @pytest.mark.parametrize("name", ["uncoupled.json", "coupled.json"])
    def test_shipped_configs(self, name):
        root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        cfg = load_config(os.path.join(root, "configs", name))
        assert cfg.n_steps == 800

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(os.path.join(str(tmp_path), "missing.json"))

    def test_load_invalid_json(self, tmp_path):
        path = os.path.join(str(tmp_path), "broken.json")
        with open(path, "w") as f:
            f.write("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)


class TestRunConfig:
    def test_with_value(self):
        cfg = parse_config(_config())
        assert cfg.with_value("epsilon", 0.1).params.epsilon == 0.1
        assert cfg.with_value("tau", 0.1).n_steps == 5
        assert cfg.with_value("n", 400.0).grid.n == 400
        assert cfg.params.epsilon == 0.05

    def test_with_value_errors(self):
        cfg = parse_config(_config())
        with pytest.raises(ConfigError):
            cfg.with_value("n", 400.5)
        with pytest.raises(ConfigError):
            cfg.with_value("kappa", 2.0)
        with pytest.raises(ConfigError):
            cfg.with_value("tau", -1.0)

    def test_output_directory_from_environment(self, monkeypatch):
        cfg = parse_config(_config())
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        assert cfg.output_directory == "out"
        monkeypatch.setenv(OUTPUT_ENV, "/tmp/elsewhere")
        assert cfg.output_directory == "/tmp/elsewhere"

    def test_initial_state(self):
        cfg = parse_config(_config())
        grid = cfg.build_grid()
        s = cfg.initial_state(grid)
        assert s.u.mass() == pytest.approx(1.0, abs=1e-12)
        assert s.v.values.max() == pytest.approx(0.5, abs=1e-3)

    def test_initial_mass_off_the_grid(self):
        cfg = parse_config(_config(initial__u={"weights": [1.0], "means": [40.0], "sigmas": [0.1]}))
        with pytest.raises(ConfigError) as e:
            cfg.initial_state(cfg.build_grid())
        assert e.value.path == "initial.u"

    def test_hat_concentration(self):
        cfg = parse_config(_config(initial__v={"kind": "hat", "amplitude": 2.0, "width": 1.0}))
        grid = cfg.build_grid()
        v = cfg.initial_state(grid).v.values
        assert v.min() == 0.0
        assert v.max() <= 2.0

    def test_solver_settings(self):
        cfg = parse_config(_config(solver__inner_tol=1e-8, solver__quantile_m=500))
        jko = cfg.jko_config()
        assert jko.tau == 0.05 and jko.inner_tol == 1e-8 and jko.quantile_m == 500


class TestOutputFiles:
    def test_csv(self, tmp_path):
        path = os.path.join(str(tmp_path), "table.csv")
        write_csv(path, {"x": [0.0, 1.0], "y": [0.1, 1.0 / 3.0]})
        with open(path) as f:
            lines = f.read().splitlines()
        assert lines[0] == "x,y"
        assert float(lines[2].split(",")[1]) == 1.0 / 3.0

    def test_json_nan_is_null(self, tmp_path):
        path = os.path.join(str(tmp_path), "report.json")
        write_json(path, {"b": math.nan, "a": np.float64(1.5), "c": [np.int64(2), np.bool_(True)]})
        with open(path) as f:
            text = f.read()
        assert json.loads(text) == {"a": 1.5, "b": None, "c": [2, True]}
        assert text.index('"a"') < text.index('"b"')


class TestParseValues:
    def test_values(self):
        assert parse_values("0.1, 0.2,0.4") == [0.1, 0.2, 0.4]
        assert parse_values("") == []

    def test_not_a_number(self):
        with pytest.raises(ConfigError):
            parse_values("0.1,abc")


class TestMain:
    def test_bad_config(self, tmp_path):
        assert main(["simulate", _write(tmp_path, _config(stepping__tau=-1.0))]) == EXIT_CONFIG_ERROR

    def test_initial_mass_off_the_grid(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, os.path.join(str(tmp_path), "out"))
        data = _config(initial__u={"weights": [1.0], "means": [40.0], "sigmas": [0.1]})
        assert main(["simulate", _write(tmp_path, data)]) == EXIT_CONFIG_ERROR

    def test_missing_config(self, tmp_path):
        assert main(["stationary", os.path.join(str(tmp_path), "missing.json")]) == EXIT_CONFIG_ERROR

    def test_solver_failure(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, os.path.join(str(tmp_path), "out"))
        path = _write(tmp_path, _config(solver__max_sweeps=1))
        assert main(["simulate", path]) == EXIT_SOLVER_ERROR

    def test_simulate(self, tmp_path, monkeypatch):
        out = os.path.join(str(tmp_path), "out")
        monkeypatch.setenv(OUTPUT_ENV, out)
        assert main(["--log-level", "WARNING", "simulate", _write(tmp_path, _config())]) == EXIT_OK

        with open(os.path.join(out, "trajectory.csv")) as f:
            lines = f.read().splitlines()
        assert lines[0].split(",")[:3] == ["t", "H", "L_u"]
        assert len(lines) == 12

        with open(os.path.join(out, "report.json")) as f:
            report = json.load(f)
        assert report["n_steps"] == 10
        assert report["classical_estimates"]["passed"]
        assert report["gradient_control"]["caveat"]
        assert "decay_steps" not in report
        assert os.path.exists(os.path.join(out, "final_state.csv"))

    def test_every_k_steps(self, tmp_path, monkeypatch):
        out = os.path.join(str(tmp_path), "out")
        monkeypatch.setenv(OUTPUT_ENV, out)
        data = _config(params__epsilon=0.0, output__every_k_steps=3)
        assert main(["simulate", _write(tmp_path, data)]) == EXIT_OK
        with open(os.path.join(out, "trajectory.csv")) as f:
            rows = f.read().splitlines()[1:]
        # rows 0, 3, 6, 9 and the last one
        assert len(rows) == 5
        with open(os.path.join(out, "report.json")) as f:
            assert "decay_steps" in json.load(f)

    def test_stationary(self, tmp_path, monkeypatch):
        out = os.path.join(str(tmp_path), "out")
        monkeypatch.setenv(OUTPUT_ENV, out)
        assert main(["stationary", _write(tmp_path, _config())]) in (EXIT_OK, EXIT_CHECK_FAILED)
        with open(os.path.join(out, "stationary_report.json")) as f:
            report = json.load(f)
        assert report["el_residual"] <= 1e-8
        assert report["bounds"]["a_passed"]
        assert os.path.exists(os.path.join(out, "stationary.csv"))

    @pytest.mark.slow
    def test_kernels_verify(self, tmp_path):
        path = os.path.join(str(tmp_path), "kernels.json")
        assert main(["kernels", "verify", "--output", path]) == EXIT_OK
        with open(path) as f:
            rows = json.load(f)
        assert all(row["pass"] for row in rows)


class TestSweep:
    def test_summary(self, tmp_path, monkeypatch):
        out = os.path.join(str(tmp_path), "out")
        monkeypatch.setenv(OUTPUT_ENV, out)
        path = _write(tmp_path, _config())
        assert cmd_sweep(path, "epsilon", [0.0, 0.05]) == EXIT_OK
        with open(os.path.join(out, "sweep_summary.csv")) as f:
            lines = f.read().splitlines()
        assert lines[0] == "value,fitted_rate,max_energy_increase,stationary_el_residual"
        assert [float(line.split(",")[0]) for line in lines[1:]] == [0.0, 0.05]
        assert os.path.isdir(os.path.join(out, "epsilon_0"))
        assert os.path.isdir(os.path.join(out, "epsilon_0.05"))

    def test_empty_values(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_sweep(_write(tmp_path, _config()), "epsilon", [])
