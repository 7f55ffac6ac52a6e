from __future__ import annotations

import json
import shlex
import subprocess
import sys
import textwrap

import pytest

from irsim.cli import main

SMALL = {"categories": {"brute_force": {"tp": 3, "fp": 2}, "misconfiguration": {"tp": 2, "fp": 1}}}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["generate", str(cfg), "--seed", "3", "--out", str(root / "corpus")]) == 0
    return root / "corpus"


def test_generate_writes_bundles_and_manifest(corpus):
    cases = sorted(p.name for p in (corpus / "cases").iterdir())
    assert cases == ["bf-0001", "bf-0002", "bf-0003", "bf-0004", "bf-0005", "mis-0001", "mis-0002", "mis-0003"]
    manifest = json.loads((corpus / "manifest.json").read_text())
    assert manifest["generation"]["accepted"] == 8
    for c in cases:
        assert {p.name for p in (corpus / "cases" / c).iterdir()} == {"case.json", "events.jsonl", "alert.json",
                                                                      "ground_truth.json"}


def test_generate_rejects_unknown_category(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"categories": {"phishing": {"tp": 1, "fp": 0}}}))
    assert main(["generate", str(cfg), "--out", str(tmp_path / "x")]) != 0
    assert "phishing" in capsys.readouterr().err


def test_run_and_evaluate_parrot(corpus, tmp_path):
    out = tmp_path / "parrot"
    assert main(["run", "--corpus", str(corpus), "--agent", "parrot", "--out", str(out)]) == 0
    reports = sorted(p.name for p in (out / "reports").iterdir())
    assert len(reports) == 8
    t = json.loads((out / "reports" / "bf-0001" / "transcript.json").read_text())
    assert t["call_count"] == 0
    assert main(["evaluate", "--corpus", str(corpus), "--reports", str(out), "--out", str(out)]) == 0
    summary = json.loads((out / "summary" / "summary.json").read_text())
    assert summary["rows"]["overall"]["m1_tp"] == 1.0 and summary["rows"]["overall"]["m1_fp"] == 0.0
    assert summary["rows"]["overall"]["avg_novel_kf"] == 0.0
    for name in ("triage.md", "triage.csv", "depth.md", "depth.csv", "cases.json"):
        assert (out / "summary" / name).is_file()


def test_crashing_agent_on_some_cases(corpus, tmp_path, caplog):
    agent = tmp_path / "flaky.py"
    agent.write_text(textwrap.dedent("""
        import json, sys
        start = json.loads(sys.stdin.readline())
        if start["case_id"] in ("bf-0001", "bf-0003", "mis-0002"):
            sys.exit(7)
        report = {"case_id": start["case_id"], "verdict": "FP", "claims": []}
        print(json.dumps({"type": "final_report", "report": report}), flush=True)
    """))
    out = tmp_path / "flaky"
    cmd = f"{shlex.quote(sys.executable)} {shlex.quote(str(agent))}"
    assert main(["run", "--corpus", str(corpus), "--agent", cmd, "--out", str(out), "--jobs", "3"]) == 0
    run = json.loads((out / "run.json").read_text())
    assert sorted(f["case_id"] for f in run["failures"]) == ["bf-0001", "bf-0003", "mis-0002"]
    assert all(f["status"] == "crashed" for f in run["failures"])
    assert not (out / "reports" / "bf-0001" / "report.json").exists()
    assert (out / "reports" / "bf-0002" / "report.json").exists()
    assert "bf-0001: crashed" in caplog.text
    assert main(["evaluate", "--corpus", str(corpus), "--reports", str(out), "--out", str(out)]) == 0
    cases = {c["case_id"]: c for c in json.loads((out / "summary" / "cases.json").read_text())}
    assert cases["bf-0001"]["status"] == "crashed" and not cases["bf-0001"]["scorable"]


def test_beta_flag_changes_headline(corpus, tmp_path):
    out = tmp_path / "kw"
    assert main(["run", "--corpus", str(corpus), "--agent", "keyword", "--out", str(out)]) == 0
    heads = {}
    for beta in ("1", "3"):
        dest = tmp_path / f"eval-{beta}"
        assert main(["evaluate", "--corpus", str(corpus), "--reports", str(out), "--out", str(dest), "--beta", beta]) == 0
        heads[beta] = json.loads((dest / "summary" / "summary.json").read_text())
    assert heads["1"]["beta"] == 1.0 and heads["3"]["beta"] == 3.0
    r1, r3 = heads["1"]["rows"]["overall"], heads["3"]["rows"]["overall"]
    assert (r1["m1_tp"], r1["m1_fp"]) == (r3["m1_tp"], r3["m1_fp"])
    if r1["m1_tp"] != r1["m1_fp"]:
        assert r1["f_beta"] != r3["f_beta"]


def test_evaluate_is_byte_stable(corpus, tmp_path):
    out = tmp_path / "oracle"
    assert main(["run", "--corpus", str(corpus), "--agent", "oracle", "--out", str(out), "--jobs", "2"]) == 0
    texts = []
    for i in range(2):
        dest = tmp_path / f"e{i}"
        assert main(["evaluate", "--corpus", str(corpus), "--reports", str(out), "--out", str(dest), "--validated"]) == 0
        texts.append((dest / "summary" / "summary.json").read_bytes())
    assert texts[0] == texts[1]
    assert json.loads(texts[0])["rows"]["overall"]["m1_tp"] == 1.0


def test_report_renders_tables(corpus, tmp_path, capsys):
    out = tmp_path / "p"
    main(["run", "--corpus", str(corpus), "--agent", "parrot", "--out", str(out)])
    main(["evaluate", "--corpus", str(corpus), "--reports", str(out), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    md = capsys.readouterr().out
    assert "| Brute Force |" in md and "| Overall |" in md
    assert main(["report", str(out / "summary" / "summary.json"), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("Category,")


def test_missing_corpus_is_an_error(tmp_path):
    assert main(["run", "--corpus", str(tmp_path / "none"), "--agent", "parrot", "--out", str(tmp_path)]) == 2
    assert main(["evaluate", "--corpus", str(tmp_path / "none"), "--reports", str(tmp_path), "--out", str(tmp_path)]) == 2


def test_env_overrides_limits(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("IRSIM_MAX_TOOL_CALLS", "1")
    out = tmp_path / "kw"
    assert main(["run", "--corpus", str(corpus), "--agent", "keyword", "--out", str(out)]) == 0
    run = json.loads((out / "run.json").read_text())
    assert run["limits"]["max_tool_calls"] == 1
    assert run["failures"] and all(f["status"] == "no_report" for f in run["failures"])


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "irsim.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("generate", "run", "evaluate", "report"):
        assert sub in res.stdout
