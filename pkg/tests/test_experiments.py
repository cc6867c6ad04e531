from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from adasgo.cli import main
from adasgo.errors import UnknownMethod, UnknownProblem
from adasgo.experiments import RESULT_COLUMNS, ExperimentSpec, run_experiment, stopping_study, write_study


class TestRunExperiment:
    def test_toy_tight_epsilon(self):
        (row,) = run_experiment(ExperimentSpec("toy", "dasg_gp", [1e-10]))
        assert row.u_error < 1e-8 and row.avg_points >= 1 and row.f_error >= 0

    def test_one_row_per_sweep_value(self):
        rows = run_experiment(ExperimentSpec("toy", "sg_cc", [3, 4, 5]))
        assert [r.param for r in rows] == [3, 4, 5]

    def test_mc_averages_repetitions(self):
        rows = run_experiment(ExperimentSpec("toy", "mc", [50], repetitions=4))
        single = run_experiment(ExperimentSpec("toy", "mc", [50], repetitions=1))
        assert rows[0].u_error != single[0].u_error

    def test_errors(self):
        with pytest.raises(UnknownProblem):
            run_experiment(ExperimentSpec("nope", "mc", [10]))
        with pytest.raises(UnknownMethod):
            run_experiment(ExperimentSpec("toy", "qmc", [10]))
        with pytest.raises(ValueError):
            ExperimentSpec("toy", "mc", [])

    def test_reproducible_outputs(self, tmp_path):
        for name in ("a", "b"):
            run_experiment(ExperimentSpec("toy", "mc", [20, 200], seed=9, out=str(tmp_path / name), repetitions=3))
        a, b = (tmp_path / "a" / "results.csv").read_bytes(), (tmp_path / "b" / "results.csv").read_bytes()
        assert a == b
        header = next(csv.reader(a.decode().splitlines()))
        assert header == RESULT_COLUMNS
        meta = json.loads((tmp_path / "a" / "run.json").read_text())
        assert meta["seed"] == 9 and len(meta["wall_time"]) == 2

    def test_dtom_baseline(self):
        (row,) = run_experiment(ExperimentSpec("toy", "dtom_mc", [100], repetitions=2))
        assert 0 < row.u_error < 0.5

    @pytest.mark.slow
    def test_additive_mc_error_order(self):
        (row,) = run_experiment(ExperimentSpec("additive", "mc", [10_000], repetitions=3))
        assert 1e-3 < row.f_error < 1e-1


class TestStoppingStudy:
    def test_outputs(self, tmp_path):
        entries = stopping_study("toy", [0.1], ["cc"])
        write_study(entries, tmp_path)
        rows = list(csv.reader((tmp_path / "stopping.csv").read_text().splitlines()))
        assert rows[0] == ["epsilon", "family", "iter", "true_error", "surrogate", "probe"]
        summary = json.loads((tmp_path / "stopping.json").read_text())
        assert summary[0]["decision"] == "Stop(at_iteration=1)"

    def test_gp_epsilon_one_stops_after_first_iteration(self):
        (e,) = stopping_study("toy", [1.0], ["gp"])
        assert e.stop_index == 1 == e.true_argmin

    def test_needs_reference(self):
        from adasgo.problems import BetaDensity, Problem

        p = Problem("noref", 1, 1, lambda u, w: u[0] ** 2 + 0 * np.atleast_2d(w)[:, 0], (BetaDensity(1, 1),))
        with pytest.raises(ValueError):
            stopping_study(p)


class TestCLI:
    def test_solve(self, capsys, tmp_path):
        assert main(["solve", "--problem", "toy", "--eps", "1e-10", "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["u_error"] < 1e-8
        assert (tmp_path / "trace.csv").exists() and (tmp_path / "trace.jsonl").exists()

    def test_sweep(self, capsys):
        assert main(["sweep", "--problem", "toy", "--method", "sg_gp", "--level", "4", "5"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(RESULT_COLUMNS) and len(lines) == 3

    def test_sweep_needs_parameter(self):
        with pytest.raises(SystemExit):
            main(["sweep", "--method", "mc"])

    def test_stopping(self, capsys, tmp_path):
        assert main(["stopping-study", "--eps", "0.1", "--families", "gp", "--out", str(tmp_path)]) == 0
        assert "Stop(at_iteration=1)" in capsys.readouterr().out

    def test_selftest(self, capsys):
        assert main(["quad-selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_unknown_problem_exit_code(self, capsys):
        assert main(["solve", "--problem", "nope", "--eps", "0.1"]) == 2
        assert "unknown problem" in capsys.readouterr().err

    def test_scheme_flag(self, capsys):
        assert main(["solve", "--eps", "1e-10", "--scheme", "quad-then-diff"]) == 0
        assert json.loads(capsys.readouterr().out)["u_error"] < 1e-8
