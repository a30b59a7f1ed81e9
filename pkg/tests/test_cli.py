"""Command-line interface: subcommands, config plumbing, output, error exits."""

import csv
import io
import json

import pytest

from predq.cli import main
from predq.engine import RngStreams, RunControl
from predq.metrics import summarize
from predq.policies import POLICIES
from predq.singleq import simulate
from predq.tables import TABLE1_COLUMNS
from predq.workload import ExponentialMean, Exponential, Poisson, generate


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def run_json(capsys, *argv):
    rc, out, err = run_cli(capsys, *argv)
    assert rc == 0, err
    return json.loads(out)


def write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestAnalytic:
    def test_mm1(self, capsys):
        rows = run_json(capsys, "analytic", "mm1_fifo", "--lam", "0.5")
        assert rows == [{"formula": "mm1_fifo", "lam": 0.5, "value": 2.0}]

    def test_bessel(self, capsys):
        rows = run_json(capsys, "analytic", "bessel_k", "--nu", "1", "--x", "2")
        assert rows[0]["value"] == pytest.approx(0.13986588181652243, rel=1e-12)

    def test_onebit_t2(self, capsys):
        rows = run_json(capsys, "analytic", "onebit_t2", "--lam", "0.7", "--threshold", "1.5")
        assert rows[0]["value"] == pytest.approx(2.525949319141325, rel=1e-12)

    def test_pk(self, capsys):
        rows = run_json(
            capsys, "analytic", "mg1_fifo_pk", "--lam", "0.5", "--mean", "1", "--second-moment", "6"
        )
        assert rows[0]["value"] == pytest.approx(4.0, rel=1e-12)

    def test_csv_format(self, capsys):
        rc, out, _ = run_cli(capsys, "analytic", "mm1_fifo", "--lam", "0.5", "--format", "csv")
        assert rc == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows[0]["formula"] == "mm1_fifo"
        assert float(rows[0]["value"]) == 2.0

    def test_unknown_formula_exits_2(self, capsys):
        rc, _, err = run_cli(capsys, "analytic", "nope", "--lam", "0.5")
        assert rc == 2
        assert err.startswith("error: ValueError:")
        assert "unknown formula" in err

    def test_missing_argument_exits_2(self, capsys):
        rc, _, err = run_cli(capsys, "analytic", "mm1_fifo")
        assert rc == 2
        assert "--lam" in err


class TestTables:
    def test_table1_json(self, capsys):
        rows = run_json(capsys, "table1", "--lams", "0.5", "--jobs", "5000", "--seed", "1")
        assert len(rows) == len(TABLE1_COLUMNS)
        assert [r["column"] for r in rows] == list(TABLE1_COLUMNS)
        assert all(r["table"] == 1 and r["lam"] == 0.5 for r in rows)

    def test_table2_csv_to_file(self, capsys, tmp_path):
        out_path = tmp_path / "t2.csv"
        rc, out, _ = run_cli(
            capsys,
            "table2",
            "--lams", "0.5",
            "--jobs", "10000",
            "--seed", "1",
            "--format", "csv",
            "--out", str(out_path),
        )
        assert rc == 0
        assert out == ""
        rows = list(csv.DictReader(out_path.open()))
        assert len(rows) == 7
        fifo = next(r for r in rows if r["column"] == "FIFO")
        assert float(fifo["mean_response"]) == pytest.approx(2.0)
        assert fifo["analytic"] == "True"

    def test_threads_env(self, capsys, monkeypatch):
        monkeypatch.setenv("PREDQ_THREADS", "2")
        rows = run_json(
            capsys, "table1", "--lams", "0.5,0.6", "--jobs", "5000", "--seed", "1"
        )
        assert {r["lam"] for r in rows} == {0.5, 0.6}


class TestSimulate:
    def test_single_queue_matches_library(self, capsys, tmp_path):
        cfg = {
            "seed": 9,
            "jobs": 20_000,
            "workload": {"arrival_rate": 0.8, "service": {"kind": "exponential"}},
            "policy": {"name": "sprpt"},
        }
        row = run_json(capsys, "simulate", "--config", write_config(tmp_path, cfg))[0]
        assert row["scenario"] == "single_queue"
        assert row["seed"] == 9

        control = RunControl(2_000, 20_000)
        wl = generate(
            Poisson(0.8), Exponential(1.0), ExponentialMean(), control.last_measured,
            RngStreams(9),
        )
        m = summarize(simulate(POLICIES["sprpt"](), wl, control))
        assert row["mean_response"] == pytest.approx(m.mean_response, rel=1e-12)

    def test_multiserver(self, capsys, tmp_path):
        cfg = {
            "seed": 5,
            "scenario": "multiserver",
            "jobs": 20_000,
            "cluster": {"n": 4, "d": 2, "threshold": 1.0},
            "workload": {"arrival_rate": 0.7},
        }
        row = run_json(capsys, "simulate", "--config", write_config(tmp_path, cfg))[0]
        assert row["scenario"] == "multiserver"
        assert row["mean_response"] > 1.0
        assert row["count"] == 20_000

    def test_flag_overrides_config(self, capsys, tmp_path):
        cfg = {
            "seed": 9,
            "jobs": 5_000,
            "workload": {"arrival_rate": 0.5},
            "policy": {"name": "fifo"},
        }
        path = write_config(tmp_path, cfg)
        base = run_json(capsys, "simulate", "--config", path)[0]
        other = run_json(capsys, "simulate", "--config", path, "--seed", "10")[0]
        assert other["seed"] == 10
        assert other["mean_response"] != base["mean_response"]

    def test_missing_seed_exits_2(self, capsys, tmp_path):
        cfg = {"workload": {"arrival_rate": 0.5}}
        rc, _, err = run_cli(capsys, "simulate", "--config", write_config(tmp_path, cfg))
        assert rc == 2
        assert "--seed" in err

    def test_unknown_policy_exits_2(self, capsys, tmp_path):
        cfg = {"seed": 1, "jobs": 1000, "policy": {"name": "mystery"}}
        rc, _, err = run_cli(capsys, "simulate", "--config", write_config(tmp_path, cfg))
        assert rc == 2
        assert "unknown policy" in err

    def test_missing_config_file_exits_2(self, capsys, tmp_path):
        rc, _, err = run_cli(
            capsys, "simulate", "--config", str(tmp_path / "absent.json"), "--seed", "1"
        )
        assert rc == 2
        assert err.startswith("error: FileNotFoundError:")

    def test_unknown_scenario_exits_2(self, capsys, tmp_path):
        cfg = {"seed": 1, "scenario": "quantum"}
        rc, _, err = run_cli(capsys, "simulate", "--config", write_config(tmp_path, cfg))
        assert rc == 2
        assert "unknown scenario" in err


class TestLlm:
    def test_tiny_run(self, capsys, tmp_path):
        cfg = {
            "seed": 3,
            "jobs": 200,
            "llm": {
                "gpu": {"kv_capacity": 4096},
                "policy": {"name": "sprpt"},
                "strategy": "discard",
            },
            "workload": {
                "arrival_rate": 0.5,
                "input_mean": 64,
                "output_mean": 16,
                "prediction": {"kind": "exact"},
            },
        }
        row = run_json(capsys, "llm", "--config", write_config(tmp_path, cfg))[0]
        assert row["scenario"] == "llm"
        assert row["count"] == 200
        assert row["mean_ttft"] > 0.0
        assert row["tokens_per_second"] > 0.0
        assert row["rejected"] == 0

    def test_missing_seed_exits_2(self, capsys, tmp_path):
        rc, _, err = run_cli(capsys, "llm", "--config", write_config(tmp_path, {}))
        assert rc == 2
        assert "--seed" in err


class TestSweep:
    def test_analytic_grid(self, capsys, tmp_path):
        cfg = {
            "sweep": {
                "target": "analytic",
                "formula": "onebit_t2",
                "parameter": "threshold",
                "params": {"lam": 0.7},
                "grid": {"start": 0.5, "stop": 5.0, "num": 10},
            }
        }
        rows = run_json(capsys, "sweep", "--config", write_config(tmp_path, cfg))
        assert len(rows) == 10
        assert sum(r["is_min"] for r in rows) == 1
        best = next(r for r in rows if r["is_min"])
        assert best["value"] == min(r["value"] for r in rows)

    def test_simulate_grid(self, capsys, tmp_path):
        cfg = {
            "seed": 11,
            "jobs": 10_000,
            "sweep": {"target": "simulate", "parameter": "threshold", "grid": [0.5, 1.0, 2.0]},
            "policy": {"name": "threshold_np"},
            "workload": {"arrival_rate": 0.7},
        }
        rows = run_json(capsys, "sweep", "--config", write_config(tmp_path, cfg))
        assert [r["threshold"] for r in rows] == [0.5, 1.0, 2.0]
        assert all("ci_half_width" in r for r in rows)
        assert sum(r["is_min"] for r in rows) == 1

    def test_unknown_target_exits_2(self, capsys, tmp_path):
        cfg = {"sweep": {"target": "dowse"}}
        rc, _, err = run_cli(capsys, "sweep", "--config", write_config(tmp_path, cfg))
        assert rc == 2
        assert "unknown sweep target" in err
