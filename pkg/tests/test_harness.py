from __future__ import annotations

import io
import json
import sys
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsim.core import Verdict, format_ts
from irsim.harness.agents import make_agent, parrot_agent, serve
from irsim.harness.protocol import (
    InvestigationReport,
    MessageType,
    ProtocolError,
    SessionStatus,
    SessionTranscript,
    ToolCall,
    decode,
    encode,
)
from irsim.harness.session import Limits, case_start_body, replay, run_session
from irsim.harness.tools import CATALOG, answer_tool_call, cost_and_usage
from irsim.scenario import CaseBundle
from irsim.telemetry import EventQuery, lookup_events


def call(bundle, tool, **params):
    return answer_tool_call(bundle, ToolCall("c1", tool, params))


def by_category(bundles, cat, verdict=Verdict.TP):
    return next(b for b in bundles if b.manifest.category.value == cat and b.ground_truth.verdict is verdict)


def script(tmp_path, name, body):
    path = tmp_path / f"{name}.py"
    path.write_text(textwrap.dedent(body), encoding="utf-8")
    return [sys.executable, str(path)]


LOOPER = """
    import json, sys
    start = json.loads(sys.stdin.readline())
    n = 0
    while True:
        n += 1
        print(json.dumps({"type": "tool_call", "call_id": f"c{n}", "tool": "list_buckets", "parameters": {}}), flush=True)
        if not sys.stdin.readline():
            break
"""


# --- tools ----------------------------------------------------------------------------


def test_catalog_covers_the_tool_surface():
    assert {"lookup_events", "list_users", "get_user", "list_roles", "get_role", "list_role_policies", "list_buckets",
            "get_bucket_policy", "list_objects", "describe_instances", "describe_security_groups",
            "get_cost_and_usage"} <= set(CATALOG)


def test_list_buckets_on_misconfiguration_case(bundles):
    b = by_category(bundles, "misconfiguration")
    res = call(b, "list_buckets")
    assert res.ok
    listed = {x["name"]: x["public"] for x in res.payload["buckets"]}
    expected = {bk.name: bk.public for a in b.environment.accounts.values() if not a.external for bk in a.buckets.values()}
    assert listed == expected
    assert any(listed.values())


def test_unknown_tool_and_bad_parameters_are_error_results(bundles):
    b = bundles[0]
    res = call(b, "foo")
    assert not res.ok and "unknown tool" in res.error
    res = call(b, "get_user")
    assert not res.ok and "user_name" in res.error
    res = call(b, "lookup_events", start_time="yesterday")
    assert not res.ok and "lookup_events(" in res.error
    res = call(b, "lookup_events", max_results=51)
    assert not res.ok
    res = call(b, "get_bucket_policy", bucket="no-such-bucket-0000")
    assert not res.ok and res.error.startswith("not found")


def test_unknown_tool_does_not_end_the_session(bundles):
    b = bundles[0]

    def agent(start):
        first = yield {"tool": "foo", "parameters": {}}
        assert first["error"]
        yield {"tool": "list_buckets", "parameters": {}}
        return {"case_id": start["case_id"], "verdict": "FP", "claims": []}

    report, transcript = run_session(b, agent)
    assert transcript.status is SessionStatus.COMPLETED
    assert transcript.tools_invoked() == ["foo", "list_buckets"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 39), st.integers(-3 * 3600, 6 * 3600), st.integers(0, 8 * 3600), st.booleans(), st.integers(1, 50))
def test_lookup_tool_equals_direct_query(bundles, idx, offset_s, width_s, by_name, size):
    b = bundles[idx % len(bundles)]
    anchor = b.log[0].event_time
    start, end = anchor + offset_s * 1000, anchor + (offset_s + width_s) * 1000
    name = b.log[len(b.log) // 2].event_name if by_name else None
    params = {"start_time": format_ts(start), "end_time": format_ts(end), "max_results": size}
    if name:
        params["event_name"] = name
    got, token = [], None
    while True:
        res = call(b, "lookup_events", **(dict(params, next_token=token) if token else params))
        assert res.ok
        got += [e["event_id"] for e in res.payload["events"]]
        token = res.payload["next_token"]
        if not token:
            break
    direct = lookup_events(b.log, EventQuery(start, end, name, max_results=10_000))["events"]
    assert got == [e.event_id for e in direct]


def test_tools_never_leak_ground_truth(bundles):
    for b in bundles[:12]:
        start = json.dumps(case_start_body(b, Limits()))
        outputs = [start] + [json.dumps(call(b, name).payload) for name, spec in CATALOG.items()
                             if not any(p.required for p in spec.params)]
        blob = "\n".join(outputs)
        assert "ground_truth" not in blob and "intent" not in blob and "malicious" not in blob
        for f in b.ground_truth.novel():
            assert f.statement not in blob


def test_external_accounts_are_hidden(bundles):
    for b in bundles:
        external = [a.account_id for a in b.environment.accounts.values() if a.external]
        if not external:
            continue
        users = json.dumps(call(b, "list_users").payload)
        assert not any(acct in users for acct in external)
        res = call(b, "list_roles", account_id=external[0])
        assert not res.ok
        return
    pytest.skip("no case with an external account")


def test_cost_report_accounts_for_every_event(bundles):
    for b in bundles[:8]:
        rows = cost_and_usage(b.log)
        assert all(r["cost_usd"] >= 0 for r in rows)
        assert sum(r["requests"] for r in rows) == len(b.log)


# --- sessions ---------------------------------------------------------------------------


def test_parrot_makes_no_calls(bundles):
    b = bundles[0]
    report, transcript = run_session(b, parrot_agent)
    assert transcript.call_count == 0 and transcript.status is SessionStatus.COMPLETED
    assert report.verdict is Verdict.TP and report.statements() == [b.alert.description]


def test_oracle_reproduces_ground_truth(small_corpus):
    oracle = make_agent("oracle", small_corpus)
    for path in sorted((small_corpus / "cases").iterdir())[:8]:
        b = CaseBundle.read(path)
        report, transcript = run_session(CaseBundle.read(path, with_ground_truth=False), oracle)
        assert report.verdict is b.ground_truth.verdict
        assert report.statements() == [f.statement for f in b.ground_truth.findings]
        assert transcript.status is SessionStatus.COMPLETED


def test_in_process_looping_agent_is_cut_at_limit(bundles):
    def looping(start):
        while True:
            yield {"tool": "list_buckets", "parameters": {}}

    report, transcript = run_session(bundles[0], looping, Limits(max_tool_calls=5))
    assert transcript.call_count == 5 and len(transcript.entries) == 5
    assert transcript.status is SessionStatus.NO_REPORT and transcript.limit_breached == "max_tool_calls"
    assert report == InvestigationReport.no_report(bundles[0].case_id)


def test_subprocess_looping_agent_is_cut_at_limit(bundles, tmp_path):
    report, transcript = run_session(bundles[0], script(tmp_path, "loop", LOOPER), Limits(max_tool_calls=5, timeout_s=20))
    assert transcript.call_count == 5
    assert transcript.limit_breached == "max_tool_calls"


def test_timeout(bundles, tmp_path):
    sleeper = script(tmp_path, "sleep", """
        import sys, time
        sys.stdin.readline()
        time.sleep(30)
    """)
    report, transcript = run_session(bundles[0], sleeper, Limits(timeout_s=0.5))
    assert transcript.status is SessionStatus.NO_REPORT and transcript.limit_breached == "timeout"
    assert transcript.wall_time_s < 10


def test_crash_is_recorded(bundles, tmp_path):
    crasher = script(tmp_path, "crash", """
        import sys
        sys.stdin.readline()
        sys.stderr.write("boom\\n")
        sys.exit(3)
    """)
    report, transcript = run_session(bundles[0], crasher, Limits(timeout_s=20))
    assert transcript.status is SessionStatus.CRASHED
    assert "code 3" in transcript.error and "boom" in transcript.error


def test_in_process_exception_counts_as_crash(bundles):
    def broken(start):
        yield {"tool": "list_users", "parameters": {}}
        raise RuntimeError("agent bug")

    _, transcript = run_session(bundles[0], broken)
    assert transcript.status is SessionStatus.CRASHED and "agent bug" in transcript.error


@pytest.mark.parametrize("line", [
    "not json",
    '{"type": "case_start"}',
    '{"type": "final_report", "report": {"case_id": "wrong", "verdict": "TP", "claims": []}}',
    '{"type": "final_report", "report": {"verdict": "maybe"}}',
    '{"type": "tool_call", "tool": 5}',
])
def test_protocol_violations_crash_the_session(bundles, tmp_path, line):
    agent = script(tmp_path, "bad", f"""
        import sys
        sys.stdin.readline()
        print({line!r}, flush=True)
        sys.stdin.readline()
    """)
    _, transcript = run_session(bundles[0], agent, Limits(timeout_s=20))
    assert transcript.status is SessionStatus.CRASHED
    assert transcript.error.startswith("protocol error")


def test_clean_exit_without_report(bundles, tmp_path):
    quiet = script(tmp_path, "quiet", "import sys; sys.stdin.readline()\n")
    _, transcript = run_session(bundles[0], quiet, Limits(timeout_s=20))
    assert transcript.status is SessionStatus.NO_REPORT and transcript.limit_breached is None


def test_stdio_reference_agent_end_to_end(small_corpus):
    path = sorted((small_corpus / "cases").iterdir())[0]
    b = CaseBundle.read(path, with_ground_truth=False)
    argv = [sys.executable, "-m", "irsim.harness.agents", "keyword"]
    report, transcript = run_session(b, argv, Limits(timeout_s=60))
    assert transcript.status is SessionStatus.COMPLETED, transcript.error
    in_proc, t2 = run_session(b, make_agent("keyword"))
    assert report == in_proc
    assert transcript.tools_invoked() == t2.tools_invoked()


def test_serve_speaks_the_line_protocol(bundles):
    b = bundles[0]
    start = encode(MessageType.CASE_START, case_start_body(b, Limits()))
    out = io.StringIO()
    assert serve(parrot_agent, io.StringIO(start + "\n"), out) == 0
    kind, body = decode(out.getvalue().strip())
    assert kind is MessageType.FINAL_REPORT and body["report"]["verdict"] == "TP"


def test_replay_reproduces_results_and_transcript_round_trips(bundles):
    for b in bundles[:10]:
        _, transcript = run_session(b, make_agent("keyword"))
        assert [r.payload for r in replay(b, transcript)] == [e.result.payload for e in transcript.entries]
        again = SessionTranscript.from_dict(json.loads(json.dumps(transcript.to_dict())))
        assert again == transcript


def test_reports_validate_on_parse():
    with pytest.raises(ProtocolError):
        InvestigationReport.from_dict({"case_id": "x", "verdict": "TP", "claims": [{"statement": 3, "evidence_refs": "no"}]})
    ok = InvestigationReport.from_dict({"case_id": "x", "verdict": "FP", "claims": []})
    assert ok.verdict is Verdict.FP


def test_limits_must_be_positive():
    with pytest.raises(ValueError):
        Limits(max_tool_calls=0)
    with pytest.raises(ValueError):
        Limits(timeout_s=0)
