"""Command-line interface: exit codes, report determinism, file handling."""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

DATA = Path(__file__).parent.parent / "src" / "respetri" / "data"


def run_cli(*args, cwd, env=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "respetri.cli", *args],
        capture_output=True, text=True, cwd=cwd, env=full_env,
    )


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "traffic.net").write_text((DATA / "traffic.net").read_text())
    (tmp_path / "srs.net").write_text((DATA / "srs_symbolic.net").read_text())
    (tmp_path / "safeguards.patch").write_text(
        (DATA / "traffic_safeguards.patch").read_text())
    return tmp_path


def report_of(result, path=None):
    text = path.read_text() if path else result.stdout
    return json.loads(text)


class TestCheck:
    def test_unsafe_exit_1_with_trace(self, workdir):
        r = run_cli("check", "traffic.net", cwd=workdir)
        assert r.returncode == 1
        rep = report_of(r)
        verdict = rep["results"]["verdicts"]["gridlock"]
        assert verdict["kind"] == "unsafe"
        assert verdict["trace"]["firings"]

    def test_safe_exit_0(self, workdir):
        run_cli("edit", "traffic.net", "safeguards.patch", cwd=workdir)
        r = run_cli("check", "traffic.patched.net", cwd=workdir)
        assert r.returncode == 0
        assert report_of(r)["results"]["verdicts"]["gridlock"]["kind"] == "safe"

    def test_unknown_exit_2(self, workdir):
        (workdir / "unbounded.net").write_text(
            "place p init 1\ntrans t in p:1 out p:1 counted\n"
            "forbidden f := #t >= 50\n")
        r = run_cli("check", "unbounded.net", "--bound-states", "30", cwd=workdir)
        assert r.returncode == 2
        assert report_of(r)["results"]["verdicts"]["f"]["kind"] == "unknown"

    def test_missing_file_exit_3(self, workdir):
        assert run_cli("check", "missing.net", cwd=workdir).returncode == 3

    def test_parse_error_exit_3_with_position(self, workdir):
        (workdir / "bad.net").write_text("place p\ntrans t in p:0\n")
        r = run_cli("check", "bad.net", cwd=workdir)
        assert r.returncode == 3
        assert "2:" in r.stderr

    def test_unknown_predicate_exit_3(self, workdir):
        assert run_cli("check", "traffic.net", "ghost", cwd=workdir).returncode == 3

    def test_usage_error_exit_3(self, workdir):
        assert run_cli("check", "traffic.net", "--bogus", cwd=workdir).returncode == 3

    def test_analysis_flags(self, workdir):
        r = run_cli("check", "traffic.net", "--cycles", "--siphons",
                    "--pressure", "gridlock", cwd=workdir)
        rep = report_of(r)
        assert ["p2", "t2", "p3", "t4", "p4", "t6"] in rep["results"]["cycles"]
        assert "siphons" in rep["results"] and "traps" in rep["results"]
        assert rep["results"]["pressure"]["distance"] == 5

    def test_report_written_to_file(self, workdir):
        out = workdir / "report.json"
        run_cli("check", "traffic.net", "--report", str(out), cwd=workdir)
        assert report_of(None, out)["command"] == "check"


class TestSimulate:
    def test_zero_steps_exit_0(self, workdir):
        r = run_cli("simulate", "srs.net", "--steps", "0", cwd=workdir)
        assert r.returncode == 0
        assert report_of(r)["results"]["run"]["firings"] == []

    def test_same_seed_identical_modulo_wall_time(self, workdir):
        runs = []
        for _ in range(2):
            r = run_cli("simulate", "traffic.net", "--steps", "30",
                        "--seed", "11", cwd=workdir)
            rep = report_of(r)
            rep.pop("wall_time_ms")
            runs.append(rep)
        assert runs[0] == runs[1]

    def test_scripted_policy_and_alarms(self, workdir):
        r = run_cli("simulate", "srs.net", "--steps", "6",
                    "--policy", "scripted:tA,t2,tBad", cwd=workdir)
        assert r.returncode == 0
        rep = report_of(r)
        assert rep["results"]["run"]["firings"] == ["tA", "t2", "tBad"]

    def test_scripted_disabled_exit_4(self, workdir):
        r = run_cli("simulate", "srs.net", "--steps", "3",
                    "--policy", "scripted:tBad", cwd=workdir)
        assert r.returncode == 4

    def test_bad_policy_exit_3(self, workdir):
        r = run_cli("simulate", "srs.net", "--policy", "sideways", cwd=workdir)
        assert r.returncode == 3

    def test_pressure_drift_attached(self, workdir):
        r = run_cli("simulate", "srs.net", "--steps", "3",
                    "--policy", "scripted:tA,t2,tBad",
                    "--pressure", "bad_state", cwd=workdir)
        rep = report_of(r)
        assert rep["results"]["drift"]["pressures"] == [3, 2, 1, 0]


class TestEdit:
    def test_edit_verify_flow(self, workdir):
        env = {"RESPETRI_LOG": str(workdir / "gov.jsonl")}
        before = (workdir / "traffic.net").read_text()
        r = run_cli("edit", "traffic.net", "safeguards.patch", "--verify",
                    cwd=workdir, env=env)
        assert r.returncode == 0
        rep = report_of(r)
        assert rep["results"]["verdicts_before"]["gridlock"]["kind"] == "unsafe"
        assert rep["results"]["verdicts_after"]["gridlock"]["kind"] == "safe"
        assert (workdir / "traffic.patched.net").exists()
        assert (workdir / "traffic.net").read_text() == before  # input untouched
        log_lines = (workdir / "gov.jsonl").read_text().splitlines()
        assert len(log_lines) == 1
        entry = json.loads(log_lines[0])
        assert entry["post_hash"] == rep["results"]["post_hash"]

    def test_regression_exit_1(self, workdir):
        env = {"RESPETRI_LOG": str(workdir / "gov.jsonl")}
        run_cli("edit", "traffic.net", "safeguards.patch", cwd=workdir, env=env)
        (workdir / "weaken.patch").write_text(
            "set guard t6 none\nremove arc inhibit p3 t4\n")
        r = run_cli("edit", "traffic.patched.net", "weaken.patch", "--verify",
                    cwd=workdir, env=env)
        assert r.returncode == 1
        assert report_of(r)["results"]["regressions"] == ["gridlock"]

    def test_dangling_patch_exit_3_no_write(self, workdir):
        (workdir / "bad.patch").write_text("remove place p3\n")
        r = run_cli("edit", "traffic.net", "bad.patch", cwd=workdir,
                    env={"RESPETRI_LOG": str(workdir / "gov.jsonl")})
        assert r.returncode == 3
        assert not (workdir / "traffic.patched.net").exists()
        assert not (workdir / "gov.jsonl").exists()

    def test_log_chain_grows(self, workdir):
        env = {"RESPETRI_LOG": str(workdir / "gov.jsonl")}
        run_cli("edit", "traffic.net", "safeguards.patch", cwd=workdir, env=env)
        (workdir / "cap.patch").write_text("set capacity p5 1\n")
        r = run_cli("edit", "traffic.patched.net", "cap.patch", cwd=workdir, env=env)
        assert r.returncode == 0
        lines = [json.loads(x) for x in
                 (workdir / "gov.jsonl").read_text().splitlines()]
        assert len(lines) == 2
        assert lines[0]["post_hash"] == lines[1]["pre_hash"]
