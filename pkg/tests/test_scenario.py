from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsim.cloud import BucketDecl, ControlAction, EnvironmentSpec, UserDecl
from irsim.core import Category, SpecError, Verdict, format_ts
from irsim.harness.protocol import ToolCall
from irsim.harness.tools import answer_tool_call
from irsim.scenario import (
    ALERT_TEMPLATES,
    Alert,
    AttackStep,
    CaseBundle,
    EvidenceArtifact,
    EvidenceKind,
    Finding,
    GroundTruthError,
    Intent,
    ScenarioExecutionError,
    ScenarioSpec,
    TraceEntry,
    check_structure,
    classify_novel,
    compress_timeline,
    execute_scenario,
    execution_order,
    extract_ground_truth,
)
from irsim.seeds import Script, anonymous, user
from irsim.telemetry import EventLog

ATTACKER = "198.51.100.23"


def brute_force_spec(fails: int = 20) -> ScenarioSpec:
    env = EnvironmentSpec(Category.BRUTE_FORCE, users=[
        UserDecl("mira.kestrel", password="Winter2025!", policies=["AdministratorAccess"]),
    ])
    s = Script()
    tries = [s.add(i * 3, user("mira.kestrel", ATTACKER), "ConsoleLogin", {"password": f"guess-{i}"}) for i in range(fails)]
    ok = s.add(fails * 3 + 10, user("mira.kestrel", ATTACKER), "ConsoleLogin", {"password": "Winter2025!"}, after=[tries[-1]])
    mk = s.add(fails * 3 + 60, user("mira.kestrel", ATTACKER), "CreateUser", {"user": "svc-sync"}, after=[ok])
    s.add(fails * 3 + 90, user("mira.kestrel", ATTACKER), "CreateAccessKey", {"user": "svc-sync"}, after=[mk])
    return ScenarioSpec("bf-example", Category.BRUTE_FORCE, env, s.steps, ALERT_TEMPLATES[Category.BRUTE_FORCE],
                        tries, Verdict.TP)


def benign_spec() -> ScenarioSpec:
    env = EnvironmentSpec(Category.MISCONFIGURATION, users=[UserDecl("ops.lead", policies=["AmazonS3FullAccess"])],
                          buckets=[BucketDecl("brochure-site-0042")])
    s = Script("b")
    s.add(0, user("ops.lead", "10.20.0.4"), "PutBucketPolicy", {"bucket": "brochure-site-0042", "public": True},
          intent=Intent.BENIGN)
    return ScenarioSpec("mis-benign", Category.MISCONFIGURATION, env, s.steps,
                        ALERT_TEMPLATES[Category.MISCONFIGURATION], ["b01"], Verdict.FP)


# --- execution --------------------------------------------------------------------


def test_brute_force_example():
    bundle = execute_scenario(brute_force_spec(), 11, background=False)
    logins = [e for e in bundle.log if e.event_name == "ConsoleLogin"]
    assert sum(1 for e in logins if e.error_code) == 20
    assert sum(1 for e in logins if not e.error_code) == 1
    assert any(e.event_name == "CreateAccessKey" and e.succeeded for e in bundle.log)
    gt = bundle.ground_truth
    assert gt.verdict is Verdict.TP
    persistence = [f for f in gt.findings if f.rule == "persistence"]
    assert len(persistence) == 1
    ids = {a.value for a in persistence[0].evidence if a.kind is EvidenceKind.EVENT_ID}
    names = {bundle.log.get(i).event_name for i in ids}
    assert names == {"CreateUser", "CreateAccessKey"}
    assert "lookup_events" in persistence[0].required_tools
    assert persistence[0].finding_id in gt.novel_findings
    assert "20 failed console sign-in attempts" in bundle.alert.description


def test_unauthorized_access_seed_has_role_chain_then_reads(seed_by_id):
    bundle = execute_scenario(seed_by_id["ua-role-chain-exfil"], 5, background=False)
    names = [e.event_name for e in bundle.log if e.succeeded]
    first_assume = names.index("AssumeRole")
    assert names.count("AssumeRole") >= 2
    assert "ListBuckets" in names[first_assume:]
    assert names.index("ListBuckets", first_assume) < max(i for i, n in enumerate(names) if n == "GetObject")


def test_single_benign_step_is_false_positive_with_novel_explanation():
    bundle = execute_scenario(benign_spec(), 3, background=False)
    gt = bundle.ground_truth
    assert gt.verdict is Verdict.FP
    assert gt.novel_findings
    assert any(f.rule.startswith("benign_") for f in gt.novel())


def test_missing_resource_names_the_step():
    spec = brute_force_spec(2)
    spec.steps.append(AttackStep("zz", user("mira.kestrel", ATTACKER), ControlAction("GetObject", {"bucket": "nope-0001", "key": "k"}),
                                 500_000, ["s03"]))
    with pytest.raises(ScenarioExecutionError) as exc:
        execute_scenario(spec, 0, background=False)
    assert exc.value.step_id == "zz"


def test_execution_is_deterministic(seed_by_id):
    spec = seed_by_id["mfe-cryptominer"]
    a = execute_scenario(spec, 42, case_id="x").files()
    b = execute_scenario(spec, 42, case_id="x").files()
    c = execute_scenario(spec, 43, case_id="x").files()
    assert a == b
    assert a != c


def test_bundle_round_trip_is_byte_exact(tmp_path, seed_by_id):
    bundle = execute_scenario(seed_by_id["bf-escalation"], 9)
    bundle.write(tmp_path / "case")
    again = CaseBundle.read(tmp_path / "case")
    assert again.files() == bundle.files()
    blind = CaseBundle.read(tmp_path / "case", with_ground_truth=False)
    assert blind.ground_truth.findings == []


def test_verdict_follows_intent_and_causality(seeds):
    for spec in seeds:
        bundle = execute_scenario(spec, 1)
        scenario = [t for t in bundle.ground_truth.trace if not t.background]
        assert {t.step_id for t in scenario} == {s.step_id for s in spec.steps}
        assert bundle.ground_truth.verdict is Verdict.TP
        times = {t.step_id: bundle.log.get(t.event_id).event_time for t in scenario}
        for s in spec.steps:
            for d in s.depends_on:
                assert times[d] < times[s.step_id], (spec.scenario_id, d, s.step_id)
        assert set(bundle.ground_truth.novel_findings) <= {f.finding_id for f in bundle.ground_truth.findings}
        assert bundle.ground_truth.novel_findings == [f.finding_id for f in bundle.ground_truth.findings if f.novel]


def test_novel_evidence_resolves_through_lookup_tool(bundles):
    for bundle in bundles:
        for f in bundle.ground_truth.novel():
            assert "lookup_events" in f.required_tools
            for a in f.evidence:
                if a.kind is not EvidenceKind.EVENT_ID:
                    continue
                e = bundle.log.get(a.value)
                params = {"start_time": format_ts(e.event_time), "end_time": format_ts(e.event_time + 1),
                          "event_name": e.event_name}
                ids = set()
                while True:
                    res = answer_tool_call(bundle, ToolCall("c", "lookup_events", params))
                    assert res.ok, res.error
                    ids |= {x["event_id"] for x in res.payload["events"]}
                    if not res.payload["next_token"]:
                        break
                    params = dict(params, next_token=res.payload["next_token"])
                assert a.value in ids


# --- structure -------------------------------------------------------------------


def _step(sid, offset=0, deps=()):
    return AttackStep(sid, anonymous("192.0.2.1"), ControlAction("ListBuckets", {}), offset, list(deps))


def test_cycles_and_unknown_dependencies_rejected():
    spec = brute_force_spec(2)
    cyclic = replace(spec, steps=[_step("a", 0, ["b"]), _step("b", 0, ["a"])], alert_trigger=["a"])
    with pytest.raises(SpecError):
        check_structure(cyclic)
    dangling = replace(spec, steps=[_step("a", 0, ["ghost"])], alert_trigger=["a"])
    with pytest.raises(SpecError):
        check_structure(dangling)
    with pytest.raises(SpecError):
        check_structure(replace(spec, alert_trigger=["nope"]))
    with pytest.raises(SpecError):
        check_structure(replace(spec, steps=[]))


@st.composite
def dags(draw):
    n = draw(st.integers(1, 14))
    steps = []
    for i in range(n):
        deps = draw(st.lists(st.integers(0, i - 1), unique=True, max_size=3)) if i else []
        steps.append(_step(f"n{i}", draw(st.integers(0, 10_000_000)), [f"n{j}" for j in deps]))
    draw(st.randoms()).shuffle(steps)
    return steps


_factors = st.one_of(st.fractions(min_value=Fraction(1, 10_000), max_value=10), st.sampled_from([1, "1/60", "0.01"]))


@settings(max_examples=200, deadline=None)
@given(dags(), _factors)
def test_compression_preserves_order_and_causality(steps, factor):
    before = [steps[i].step_id for i in execution_order(steps)]
    out = compress_timeline(steps, factor)
    after = [out[i].step_id for i in execution_order(out)]
    assert before == after
    t = {s.step_id: s.offset for s in out}
    for s in out:
        for d in s.depends_on:
            assert t[d] < t[s.step_id]


def test_compression_identity_and_chain():
    steps = [_step("a", 0), _step("b", 1000, ["a"]), _step("c", 2000, ["b"])]
    assert compress_timeline(steps, 1) == steps
    squeezed = compress_timeline(steps, "0.01")
    assert [s.offset for s in squeezed] == [0, 10, 20]
    tiny = compress_timeline(steps, Fraction(1, 10**6))
    assert [s.offset for s in tiny] == [0, 1, 2]
    with pytest.raises(ValueError):
        compress_timeline(steps, 0)


# --- ground truth -------------------------------------------------------------------


ALERT = Alert("a1", "Detection: 20 failed console sign-in attempts against IAM user mira from 198.51.100.23 within 2 minutes.",
              ["e1"], Category.BRUTE_FORCE, "2025-03-03T09:05:00.000Z")


def test_classify_novel_examples():
    ev = [EvidenceArtifact(EvidenceKind.EVENT_ID, "e1"), EvidenceArtifact(EvidenceKind.EVENT_ID, "e2")]
    restated = Finding("F01", "alert_restatement", ALERT.description, ev, ["lookup_events"])
    persistence = Finding("F02", "persistence", "Backdoor user svc-sync holding key AKIA0001 gives the intruder lasting access",
                          ev, ["lookup_events", "list_users"])
    no_evidence = replace(persistence, evidence=[])
    no_tools = replace(persistence, required_tools=[])
    assert not classify_novel(restated, ALERT)
    assert classify_novel(persistence, ALERT)
    assert not classify_novel(no_evidence, ALERT)
    assert not classify_novel(no_tools, ALERT)


def test_extraction_rejects_trace_log_mismatch():
    with pytest.raises(GroundTruthError):
        extract_ground_truth([TraceEntry("s1", "missing", Intent.MALICIOUS)], EventLog(), ALERT)


def test_empty_malicious_trace_is_false_positive():
    bundle = execute_scenario(brute_force_spec(3), 0, background=False)
    trace = [replace(t, intent=Intent.BENIGN) for t in bundle.ground_truth.trace]
    gt = extract_ground_truth(trace, bundle.log, bundle.alert)
    assert gt.verdict is Verdict.FP


def test_scenario_spec_round_trip(seeds):
    for spec in seeds:
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec


def test_background_noise_is_benign_and_optional(seed_by_id):
    spec = seed_by_id["mis-public-policy"]
    quiet = execute_scenario(spec, 4, background=False)
    noisy = execute_scenario(spec, 4)
    assert len(noisy.log) >= len(quiet.log)
    assert all(t.intent is Intent.BENIGN for t in noisy.ground_truth.trace if t.background)
