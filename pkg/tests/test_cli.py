import json

import numpy as np
import pytest

from hetrobust.cli import read_matrix_csv, run
from hetrobust.fixtures import two_group

FAST = {"candidates": 200, "m1": 2, "mc_candidates": 20, "mc_n0": 200, "mc_n1": 400, "mc_n2": 1000}


def write_config(tmp_path, **cfg):
    cfg.setdefault("output_dir", str(tmp_path / "out"))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text())


class TestCommands:
    def test_check_two_group(self, tmp_path, capsys):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 30, "n1": 3})
        assert run(["check", "--config", cfg]) == 0
        res = report(tmp_path)["results"]
        assert len(res) == 12
        assert {r["verdict"] for r in res} == {"SizeControllable"}
        assert "SizeControllable x12" in capsys.readouterr().out

    def test_design_csv(self, tmp_path):
        X = two_group(8, 3).X
        np.savetxt(tmp_path / "X.csv", X, delimiter=",", header="g1,g2", comments="")
        cfg = write_config(tmp_path, design_path=str(tmp_path / "X.csv"),
                           restriction={"R": [[1, -1]], "r": [0]}, statistic="HC2")
        assert run(["check", "--config", cfg]) == 0
        assert np.array_equal(read_matrix_csv(tmp_path / "X.csv"), X)

    def test_size_and_critval(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic=["HC2"],
                           c=5.0, params=FAST)
        assert run(["size", "--config", cfg]) == 0
        assert 0 <= report(tmp_path)["results"][0]["size"]["size"] <= 1
        assert run(["critval", "--config", cfg]) == 0
        entry = report(tmp_path)["results"][0]
        assert entry["critical_value"]["converged"] is True
        assert entry["feasibility"]["verdict"] == "SizeControllable"

    def test_pvalue_below_c_star(self, tmp_path, capsys):
        y = two_group(30, 3).mu0 + 0.01
        np.savetxt(tmp_path / "y.csv", y)
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 30, "n1": 3}, statistic="UC",
                           y_path=str(tmp_path / "y.csv"), params=FAST)
        assert run(["pvalue", "--config", cfg]) == 0
        assert report(tmp_path)["results"][0]["p_value"] == 1.0
        assert "p=1.0000" in capsys.readouterr().out

    def test_power(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic="HC0", c=4.0,
                           delta_grid=[0, 1, 2], include_oracle=True)
        assert run(["power", "--config", cfg]) == 0
        lines = (tmp_path / "out" / "power.csv").read_text().splitlines()
        assert lines[0] == "test,sigma_label,delta,power"
        assert len(lines) == 7

    def test_hostile_and_bootstrap(self, tmp_path):
        cfg = write_config(tmp_path, statistic="UC", hostile={"n": 10, "restarts": 1, "maxiter": 5},
                           params=FAST)
        assert run(["hostile", "--config", cfg]) == 0
        assert (tmp_path / "out" / "hostile_UC.csv").exists()
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic="HC0",
                           variant="C", params={"mc_reps": 300})
        assert run(["bootstrap-eval", "--config", cfg]) == 0
        assert report(tmp_path)["results"][0]["reps"] == 300


class TestValidation:
    def test_alpha_out_of_range(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group"}, statistic="HC2", alpha=1.5)
        assert run(["critval", "--config", cfg]) == 2

    def test_unknown_key(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group"}, bogus=1)
        assert run(["check", "--config", cfg]) == 2

    def test_missing_file(self, tmp_path):
        assert run(["check", "--config", str(tmp_path / "none.json")]) == 2

    def test_bad_statistic(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group"}, statistic="HC7")
        assert run(["check", "--config", cfg]) == 2

    def test_not_converged_exit(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic="HC2",
                           params={**FAST, "max_iter": 1})
        assert run(["critval", "--config", cfg]) == 3
        assert report(tmp_path)["results"][0]["critical_value"]["converged"] is False

    def test_refused_is_recorded(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "k_group", "sizes": [3, 3, 4]}, statistic="HC0",
                           params=FAST)
        assert run(["critval", "--config", cfg]) == 0
        assert "refused" in report(tmp_path)["results"][0]


class TestReproducibility:
    def test_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic="HC3", c=4.5,
                           params=FAST, seed=11)
        assert run(["size", "--config", cfg]) == 0
        first = (tmp_path / "out" / "report.json").read_bytes()
        assert run(["size", "--config", cfg]) == 0
        assert (tmp_path / "out" / "report.json").read_bytes() == first
        assert "started" in json.loads((tmp_path / "out" / "metadata.json").read_text())

    def test_env_seed(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, fixture={"name": "two_group", "n": 12, "n1": 3}, statistic="HC3", c=4.5,
                           params=FAST, seed=1)
        monkeypatch.setenv("HRT_SEED", "99")
        assert run(["size", "--config", cfg]) == 0
        assert report(tmp_path)["seed"] == 99

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as info:
            run(["--help"])
        assert info.value.code == 0
        assert "bootstrap-eval" in capsys.readouterr().out
