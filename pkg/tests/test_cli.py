from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from irs_matchsel.cli import EXIT_CHECK_FAILED, EXIT_GUARD, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, main
from irs_matchsel.fileio import save_scenario


@pytest.fixture
def scen(tmp_path):
    path = tmp_path / "s.json"
    assert main(["gen", "--attacks", "8", "--countermeasures", "4", "--nodes", "20", "--coverage", "0.8",
                 "--budget", "5", "--seed", "3", "-o", str(path)]) == EXIT_OK
    return path


def test_gen_is_deterministic(tmp_path, scen):
    other = tmp_path / "again.json"
    main(["gen", "--attacks", "8", "--countermeasures", "4", "--nodes", "20", "--coverage", "0.8",
          "--budget", "5", "--seed", "3", "-o", str(other)])
    assert other.read_bytes() == scen.read_bytes()


def test_solve_and_check(tmp_path, t1):
    path = tmp_path / "t1.json"
    save_scenario(t1, path)
    out = tmp_path / "sol.json"
    assert main(["solve", str(path), "--variant", "csm", "-o", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["pairs"] == [[0, 0], [1, 1]]
    assert doc["aggregates"]["objective"] == pytest.approx(2.4351, abs=1e-4)
    report = tmp_path / "report.json"
    assert main(["check", str(path), str(out), "-o", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["stable"] is True


def test_check_flags_blocking_pair(tmp_path, t1):
    path = tmp_path / "t1.json"
    save_scenario(t1, path)
    sol = tmp_path / "hand.json"
    sol.write_text(json.dumps({"pairs": [[0, 1], [1, 1]]}))
    report = tmp_path / "report.json"
    assert main(["check", str(path), str(sol), "-o", str(report)]) == EXIT_CHECK_FAILED
    doc = json.loads(report.read_text())
    assert doc["blocking_pairs"] == [{"attack": 0, "countermeasure": 0, "conditions": [3]}]


def test_infeasible_exit_code(tmp_path, t1):
    path = tmp_path / "t1.json"
    save_scenario(t1.replace(budget_xi=0.1), path)
    out = tmp_path / "sol.json"
    assert main(["solve", str(path), "-o", str(out)]) == EXIT_INFEASIBLE
    assert json.loads(out.read_text())["feasible"] is False
    assert main(["exact", str(path), "-o", str(out)]) == EXIT_INFEASIBLE


def test_invalid_input_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "nodes": [')
    assert main(["solve", str(bad)]) == EXIT_INVALID
    assert "section 'nodes'" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_INVALID
    assert main(["solve"]) == EXIT_INVALID


def test_invalid_scenario_content(tmp_path, t1):
    path = tmp_path / "t1.json"
    save_scenario(t1.replace(betas=(0.5, 0.5, 0.5)), path)
    assert main(["solve", str(path)]) == EXIT_INVALID


def test_resource_guard_exit_code(tmp_path):
    path = tmp_path / "big.json"
    main(["gen", "--attacks", "12", "--countermeasures", "6", "--nodes", "10", "--coverage-density", "0.9", "-o", str(path)])
    assert main(["exact", str(path), "--method", "brute", "--limit", "100"]) == EXIT_GUARD
    assert main(["exact", str(path), "--limit", "2"]) == EXIT_GUARD
    cap = tmp_path / "cap.json"
    main(["gen", "--attacks", "3", "--countermeasures", "21", "--nodes", "5", "-o", str(cap)])
    assert main(["solve", str(cap)]) == EXIT_GUARD


def test_bound_and_exact_agree_with_sandwich(tmp_path, scen):
    bound, exact, sol = tmp_path / "b.json", tmp_path / "e.json", tmp_path / "s.json"
    assert main(["bound", str(scen), "-o", str(bound)]) == EXIT_OK
    assert main(["exact", str(scen), "-o", str(exact)]) == EXIT_OK
    assert main(["solve", str(scen), "--all-starts", "-o", str(sol)]) == EXIT_OK
    ub = json.loads(bound.read_text())["upper_bound"]
    opt = json.loads(exact.read_text())["aggregates"]["objective"]
    sm = json.loads(sol.read_text())["aggregates"]["objective"]
    assert sm <= opt + 1e-9 <= ub + 2e-9


def test_budget_semantics_flag(tmp_path, t1):
    path = tmp_path / "t1.json"
    save_scenario(t1.replace(budget_xi=0.75), path)
    out = tmp_path / "sol.json"
    main(["solve", str(path), "--budget-semantics", "per-countermeasure", "-o", str(out)])
    assert json.loads(out.read_text())["aggregates"]["money"] == pytest.approx(0.7)
    assert main(["solve", str(path), "--budget-semantics", "per-attack"]) == EXIT_INVALID


def test_pareto_csv(tmp_path, scen):
    out = tmp_path / "front.csv"
    assert main(["pareto", str(scen), "--front-only", "-o", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert rows
    assert all(float(r["neg_qos_cost"]) == -float(r["qos_cost"]) for r in rows)
    assert all(r["on_front"] == "1" for r in rows)


def test_experiment_worker_counts_byte_identical(tmp_path, monkeypatch):
    monkeypatch.delenv("IRS_MATCHSEL_THREADS", raising=False)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["experiment", "beta-sweep", "--runs", "4", "--workers", "1", "-o", str(a)]) == EXIT_OK
    assert main(["experiment", "beta-sweep", "--runs", "4", "--workers", "2", "-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_experiment_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"name": "coverage-sweep", "runs": 2, "fixed": {"n_attacks": 5, "n_countermeasures": 3},
                               "cells": [{"coverage_fraction": 0.5}, {"coverage_fraction": 1.0}]}))
    out = tmp_path / "o.csv"
    assert main(["experiment", "--config", str(cfg), "-o", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 5
    assert main(["experiment"]) == EXIT_INVALID


def test_console_script_module_entry(tmp_path):
    result = subprocess.run([sys.executable, "-m", "irs_matchsel.cli", "gen", "--attacks", "2", "--countermeasures", "1",
                             "--nodes", "3"], capture_output=True, text=True)
    assert result.returncode == EXIT_OK
    assert json.loads(result.stdout)["version"] == 1
