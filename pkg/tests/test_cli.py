import json
import math

import numpy as np
import pytest

from agesampling.cli import EXIT_CONFIG, ExperimentConfig, load_config, main
from agesampling.errors import ConfigError


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return str(path)


def _run(tmp_path, command, cfg, *extra):
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", _write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out.read_text() if out.exists() else ""


BASE = {"service": {"kind": "constant", "y": 1.0}, "penalty": {"kind": "linear"}}


class TestSolve:
    def test_constant_service(self, tmp_path):
        code, text = _run(tmp_path, "solve", BASE)
        assert code == 0
        res = json.loads(text)
        assert abs(res["beta"] - 1.5) <= 1e-6
        assert res["constrained_active"] is False

    def test_discrete_two_point(self, tmp_path):
        cfg = {"service": {"kind": "two_point", "y1": 1, "y2": 2}, "penalty": {"kind": "linear"},
               "mode": "discrete"}
        code, text = _run(tmp_path, "solve", cfg)
        assert code == 0
        assert abs(json.loads(text)["beta"] - 11 / 6) <= 1e-9

    def test_source_gives_mi_penalty(self, tmp_path):
        cfg = {"service": {"kind": "two_point", "y1": 1, "y2": 5}, "source": {"kind": "gauss_markov", "a": 0.8},
               "mode": "discrete"}
        code, text = _run(tmp_path, "solve", cfg)
        assert code == 0 and json.loads(text)["beta"] < 0.0


class TestErrors:
    def test_malformed_json(self, tmp_path):
        assert main(["solve", "--config", _write(tmp_path, "{not json")]) == EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        assert main(["solve", "--config", _write(tmp_path, dict(BASE, colour="red"))]) == EXIT_CONFIG

    def test_unknown_sweep_axis(self, tmp_path):
        cfg = dict(BASE, sweep={"axis": "temperature", "values": [1, 2]})
        assert main(["sweep", "--config", _write(tmp_path, cfg)]) == EXIT_CONFIG

    def test_discrete_mode_needs_integer_law(self, tmp_path):
        cfg = dict(BASE, service={"kind": "exponential", "rate": 1.0}, mode="discrete")
        assert main(["solve", "--config", _write(tmp_path, cfg)]) == EXIT_CONFIG


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict(dict(BASE, f_max=0.25, seed=5, sweep={"axis": "f_max", "values": [0.2]}))
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert load_config(_write(tmp_path, cfg.to_dict())) == cfg

    def test_inf_rate(self):
        cfg = ExperimentConfig.from_dict(dict(BASE, f_max="inf"))
        assert math.isinf(cfg.f_max)
        assert cfg.to_dict()["f_max"] == "inf"

    def test_sweep_axis_override(self):
        cfg = ExperimentConfig.from_dict(BASE)
        assert cfg.at("a", 0.7).penalty == {"kind": "neg_mi_gauss", "a": 0.7}
        assert cfg.at("f_max", 0.1).f_max == 0.1
        with pytest.raises(ConfigError):
            cfg.at("rho", 1.0)


class TestCompare:
    def test_zero_penalty_everywhere(self, tmp_path):
        cfg = {"service": {"kind": "two_point", "y1": 1, "y2": 4}, "penalty": {"kind": "exponential", "alpha": 0.0},
               "mode": "discrete", "n_cycles": 2000}
        code, text = _run(tmp_path, "compare", cfg)
        assert code == 0
        lines = text.splitlines()
        assert lines[0] == "# age-opt v0.1.0"
        rows = [dict(zip(lines[1].split(","), ln.split(","))) for ln in lines[2:]]
        assert [r["policy"] for r in rows] == ["uniform", "zero_wait", "optimal"]
        assert all(float(r["avg_penalty"]) == 0.0 for r in rows)

    def test_zero_wait_infeasible_flag(self, tmp_path):
        cfg = dict(BASE, f_max=0.5, n_cycles=2000)
        _, text = _run(tmp_path, "compare", cfg)
        rows = {ln.split(",")[0]: ln.split(",") for ln in text.splitlines()[2:]}
        assert rows["zero_wait"][1] == "false"
        assert rows["optimal"][1] == "true"

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = dict(BASE, service={"kind": "exponential", "rate": 1.0}, n_cycles=3000, n_mc=5000)
        _, first = _run(tmp_path, "compare", cfg)
        _, second = _run(tmp_path, "compare", cfg)
        assert first == second

    def test_seed_override(self, tmp_path):
        cfg = dict(BASE, service={"kind": "exponential", "rate": 1.0}, n_cycles=3000, n_mc=5000)
        _, a = _run(tmp_path, "compare", cfg, "--seed", "1")
        _, b = _run(tmp_path, "compare", cfg, "--seed", "2")
        assert a != b


class TestOtherCommands:
    def test_simulate_with_trajectory(self, tmp_path):
        traj = tmp_path / "traj.csv"
        cfg = dict(BASE, n_cycles=500, policy="zero_wait", trajectory_out=str(traj))
        code, text = _run(tmp_path, "simulate", cfg)
        assert code == 0
        np.testing.assert_allclose(json.loads(text)["avg_penalty"], 1.5)
        assert traj.read_text().splitlines()[0] == "i,S,Z,Y,D"

    def test_sweep_rows_in_axis_order(self, tmp_path):
        cfg = {"service": {"kind": "two_point", "y1": 1, "y2": 5}, "mode": "discrete", "n_cycles": 2000,
               "penalty": {"kind": "linear"}, "sweep": {"axis": "a", "values": [0.9, 0.5]}}
        code, text = _run(tmp_path, "sweep", cfg)
        assert code == 0
        rows = text.splitlines()[2:]
        assert len(rows) == 6
        assert [r.split(",")[1] for r in rows] == ["0.9"] * 3 + ["0.5"] * 3

    def test_zero_wait_check(self, tmp_path):
        code, text = _run(tmp_path, "zero-wait-check", BASE)
        assert code == 0
        res = json.loads(text)
        assert res["optimal"] is True
        assert set(res) >= {"optimal", "lhs", "rhs"}

    def test_json_format_for_compare(self, tmp_path):
        code, text = _run(tmp_path, "compare", dict(BASE, n_cycles=500), "--format", "json")
        assert code == 0 and len(json.loads(text)) == 3
