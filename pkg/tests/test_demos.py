from __future__ import annotations

import importlib.util
import sys
from pathlib import Path

from irsim.cli import main

DEMOS = Path(__file__).resolve().parents[1] / "demos"


def _load(name):
    spec = importlib.util.spec_from_file_location(name, DEMOS / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_end_to_end_demo(tmp_path, capsys):
    _load("end_to_end").main(tmp_path)
    out = capsys.readouterr().out
    assert "generated 28 cases" in out and out.count("| Overall |") == 2


def test_stdio_demo_agent(tmp_path):
    _load("end_to_end").main(tmp_path)
    agent = f"{sys.executable} {DEMOS / 'stdio_agent.py'}"
    assert main(["run", "--corpus", str(tmp_path / "corpus"), "--agent", agent, "--out", str(tmp_path / "r")]) == 0
    assert len(list((tmp_path / "r" / "reports").glob("*/report.json"))) == 28
