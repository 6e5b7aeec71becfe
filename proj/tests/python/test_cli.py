import json
import os
import subprocess

import pytest

CLI = os.environ.get("CARDIOLOOP_CLI")

pytestmark = pytest.mark.skipif(not CLI, reason="CARDIOLOOP_CLI not set")


def run(*args, cwd=None):
    return subprocess.run([CLI, *args], capture_output=True, text=True, cwd=cwd)


def test_zones():
    p = run("zones", "--age", "30")
    assert p.returncode == 0
    assert "hr_max 187.0" in p.stdout
    assert "zone 3  [130.9, 149.6)" in p.stdout


def test_usage_errors():
    assert run("zones", "--age", "300").returncode == 64
    assert run("frobnicate").returncode == 64


def test_sim_then_analyze(tmp_path):
    out = tmp_path / "log.jsonl"
    p = run("sim", "--condition", "adaptive", "--out", str(out))
    assert p.returncode == 0, p.stderr
    a = run("analyze", str(out), "--json")
    assert a.returncode == 0
    assert a.stderr == ""
    assert a.stdout.strip() == out.read_text().splitlines()[-1]
    assert json.loads(a.stdout)["type"] == "summary"


def test_synth_and_replay(tmp_path):
    ecg = tmp_path / "ecg.csv"
    assert run("synth-ecg", "--hr", "90", "--duration", "30", "--out", str(ecg)).returncode == 0
    frames = tmp_path / "frames.jsonl"
    hr = tmp_path / "hr.csv"
    p = run("replay", str(ecg), "--out", str(frames), "--hr-out", str(hr))
    assert p.returncode == 0, p.stderr
    states = [json.loads(line) for line in frames.read_text().splitlines()]
    assert states and all(s["type"] == "state" for s in states)
    last = [s for s in states if s["hr_bpm"] is not None][-1]
    assert abs(last["hr_bpm"] - 90.0) < 2.0


def test_missing_input():
    assert run("analyze", "/nonexistent/log.jsonl").returncode == 66
