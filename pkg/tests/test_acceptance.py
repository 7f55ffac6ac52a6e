"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The full default corpus (794 cases) is generated twice through the CLI and
shared by the corpus-level criteria.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from fractions import Fraction
from functools import lru_cache

import pytest

from irsim.cli import main
from irsim.core import CATEGORY_ORDER, Verdict, format_ts
from irsim.evaluator.metrics import EvidenceOutcome, f_beta, m2_threshold, match_findings, score_m1
from irsim.evaluator.rouge import rouge_l
from irsim.evaluator.scoring import OVERALL, ValidationMode, aggregate, score_case
from irsim.harness.agents import make_agent
from irsim.harness.protocol import ToolCall
from irsim.harness.session import run_session
from irsim.harness.tools import answer_tool_call
from irsim.scenario import AttackStep, EvidenceKind, Finding, GroundTruth, compress_timeline, read_corpus
from irsim.cloud import ControlAction
from irsim.seeds import anonymous
from irsim.telemetry import CloudEvent, EventLog, EventQuery, IdentityKind, UserIdentity, lookup_events
from irsim.variation import DEFAULT_COUNTS

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    for name in ("a", "b"):
        assert main(["generate", "--seed", "0", "--out", str(root / name)]) == 0
    return root


@pytest.fixture(scope="module")
def corpus(generated):
    return list(read_corpus(generated / "a"))


@pytest.fixture(scope="module")
def keyword_run(generated):
    out = generated / "keyword"
    assert main(["run", "--corpus", str(generated / "a"), "--agent", "keyword", "--out", str(out), "--jobs", "4"]) == 0
    return out


# --- 1 -----------------------------------------------------------------------------------


def test_criterion_1_f_beta_reproduction(criterion):
    with criterion(1, "F-beta reproduction") as c:
        headline = f_beta(0.971, 0.734, 3)
        misconfig = f_beta(0.940, 0.827, 3)
        c.detail = f"headline {headline:.4f}, misconfiguration row {misconfig:.4f}"
        assert 0.940 <= headline <= 0.944
        assert 0.925 <= misconfig <= 0.931


# --- 2 -----------------------------------------------------------------------------------


def test_criterion_2_rate_reconstruction(criterion):
    with criterion(2, "M1 rate reconstruction") as c:
        pairs = [(Verdict.FP, Verdict.TP)] * 14 + [(Verdict.TP, Verdict.TP)] * 461
        pairs += [(Verdict.TP, Verdict.FP)] * 85 + [(Verdict.FP, Verdict.FP)] * 234
        random.Random(0).shuffle(pairs)
        m = score_m1(pairs)
        c.detail = f"m1_tp {m.m1_tp:.4f}, m1_fp {m.m1_fp:.4f}"
        assert abs(m.m1_tp - 0.9705) <= 5e-4
        assert abs(m.m1_fp - 0.7335) <= 5e-4


# --- 3 -----------------------------------------------------------------------------------


def test_criterion_3_distribution(criterion, corpus):
    with criterion(3, "default corpus composition") as c:
        counts = Counter((b.manifest.category, b.ground_truth.verdict) for b in corpus)
        per_cat = {cat: counts[(cat, Verdict.TP)] + counts[(cat, Verdict.FP)] for cat in CATEGORY_ORDER}
        tp = sum(v for (_, verdict), v in counts.items() if verdict is Verdict.TP)
        fp = sum(v for (_, verdict), v in counts.items() if verdict is Verdict.FP)
        c.detail = f"{len(corpus)} cases, {tp} TP / {fp} FP, per category {list(per_cat.values())}"
        assert len(corpus) == 794 and (tp, fp) == (475, 319)
        assert list(per_cat.values()) == [194, 298, 175, 127]
        for cat, want in DEFAULT_COUNTS.items():
            assert (counts[(cat, Verdict.TP)], counts[(cat, Verdict.FP)]) == (want.tp, want.fp)


# --- 4 -----------------------------------------------------------------------------------


def test_criterion_4_determinism(criterion, generated, keyword_run):
    with criterion(4, "byte-identical regeneration and evaluation") as c:
        a, b = generated / "a", generated / "b"
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        differing = [p for p in files_a if (a / p).read_bytes() != (b / p).read_bytes()]
        summaries = []
        for i in range(2):
            dest = generated / f"eval-{i}"
            assert main(["evaluate", "--corpus", str(a), "--reports", str(keyword_run), "--out", str(dest)]) == 0
            summaries.append((dest / "summary" / "summary.json").read_bytes())
        c.detail = f"{len(files_a)} files compared, {len(differing)} differ; summaries equal: {summaries[0] == summaries[1]}"
        assert not differing
        assert summaries[0] == summaries[1]


# --- 5 -----------------------------------------------------------------------------------


def test_criterion_5_oracle_parrot_sandwich(criterion, generated, corpus):
    with criterion(5, "oracle/parrot sandwich") as c:
        oracle, parrot = make_agent("oracle", generated / "a"), make_agent("parrot")
        o_scores, p_scores = [], []
        for b in corpus:
            for agent, sink in ((oracle, o_scores), (parrot, p_scores)):
                report, transcript = run_session(b, agent)
                sink.append(score_case(b, report, transcript))
        o = aggregate(o_scores).rows[OVERALL]
        tp_o = [s for s in o_scores if s.actual is Verdict.TP]
        tp_p = [s for s in p_scores if s.actual is Verdict.TP]
        c.detail = (f"oracle m1_tp {o.m1_tp}, m2 {o.m2_recall}, novel {o.novel_coverage}; "
                    f"parrot novel max {max(s.m2_novel_recall for s in tp_p)}, "
                    f"downgraded {sum(s.evidence_validation is EvidenceOutcome.DOWNGRADED for s in tp_p)}/{len(tp_p)}")
        assert o.m1_tp == 1.0
        assert all(s.m2_recall == 1.0 and s.m2_novel_recall == 1.0 for s in tp_o)
        assert all(s.evidence_validation is EvidenceOutcome.UPHELD for s in tp_o)
        assert all(s.m2_novel_recall == 0.0 for s in tp_p)
        assert all(s.evidence_validation is EvidenceOutcome.DOWNGRADED for s in tp_p)


# --- 6 -----------------------------------------------------------------------------------

VOCAB = ("user role bucket key admin assumed created deleted from to the a of console login failed "
         "getobject 203.0.113.9 198.51.100.4 arn:aws:iam::123456789012:role/admin svc-sync port 4444 "
         "instance shell policy public trail stopped").split()


@lru_cache(maxsize=None)
def _lcs(a: tuple, b: tuple) -> int:
    if not a or not b:
        return 0
    if a[0] == b[0]:
        return 1 + _lcs(a[1:], b[1:])
    return max(_lcs(a[1:], b), _lcs(a, b[1:]))


def _brute_f1(ref: list[str], cand: list[str]) -> Fraction:
    if not ref or not cand:
        return Fraction(0)
    lcs = _lcs(tuple(ref), tuple(cand))
    if not lcs:
        return Fraction(0)
    p, r = Fraction(lcs, len(cand)), Fraction(lcs, len(ref))
    return 2 * p * r / (p + r)


def _mutate(tokens: list[str], rng: random.Random) -> list[str]:
    out = list(tokens)
    for _ in range(rng.randrange(0, 8)):
        op = rng.randrange(3)
        if op == 0 and out:
            del out[rng.randrange(len(out))]
        elif op == 1:
            out.insert(rng.randrange(len(out) + 1), rng.choice(VOCAB))
        elif out:
            out[rng.randrange(len(out))] = rng.choice(VOCAB)
    return out


def test_criterion_6_matcher_oracle(criterion):
    with criterion(6, "match_findings vs brute-force LCS") as c:
        rng = random.Random(6)
        pairs = agree = matched = 0
        tau = Fraction(42, 100)
        for case in range(40):
            refs = [[rng.choice(VOCAB) for _ in range(rng.randrange(1, 16))] for _ in range(5)]
            claims = [_mutate(rng.choice(refs), rng) if rng.random() < 0.7 else
                      [rng.choice(VOCAB) for _ in range(rng.randrange(1, 16))] for _ in range(5)]
            gt = GroundTruth(Verdict.TP, [Finding(f"F{i}", "r", " ".join(t), [], []) for i, t in enumerate(refs)], [])
            got = match_findings([" ".join(t) for t in claims], gt, 0.42)
            for ref, m in zip(refs, got):
                best = max(_brute_f1(ref, cl) for cl in claims)
                pairs += len(claims)
                agree += m.matched == (best > tau)
                matched += m.matched
                assert abs(m.best_score - float(best)) < 1e-12
        c.detail = f"{pairs} pairs over {40 * 5} findings, {agree}/{40 * 5} match decisions agree, {matched} matched"
        assert pairs == 1000 and agree == 200


# --- 7 -----------------------------------------------------------------------------------


def _random_log(n: int, rng: random.Random) -> EventLog:
    users = [f"arn:aws:iam::111122223333:user/u{i}" for i in range(6)]
    sessions = [f"arn:aws:sts::111122223333:assumed-role/R{i}/s{j}" for i in range(3) for j in range(2)]
    resources = [f"arn:aws:s3:::bucket-{i:04d}" for i in range(8)]
    names = ["GetObject", "ListBuckets", "AssumeRole", "ConsoleLogin", "PutBucketPolicy", "RunInstances"]
    t, out = 1_740_000_000_000, []
    for i in range(n):
        t += rng.choice([0, 0, 1, 7, 250, 60_000])
        who = rng.choice(users + sessions + [None])
        if who is None:
            ident = UserIdentity(IdentityKind.ANONYMOUS)
        else:
            kind = IdentityKind.ASSUMED_ROLE if ":assumed-role/" in who else IdentityKind.IAM_USER
            ident = UserIdentity(kind, who, "111122223333", f"AKIA{(users + sessions).index(who):016d}")
        out.append(CloudEvent(f"ev-{i:06d}", t, "s3.amazonaws.com", rng.choice(names), "us-east-1", "192.0.2.1",
                              ident, {}, {}, None, tuple(rng.sample(resources, rng.randrange(0, 3)))))
    return EventLog(out)


def _scan(log: EventLog, start, end, name, principal, resource) -> list[str]:
    hits = []
    for e in log:
        ident = e.user_identity
        role = None
        if ident.arn and ":assumed-role/" in ident.arn:
            acct = ident.arn.split(":")[4]
            role = f"arn:aws:iam::{acct}:role/{ident.arn.split('/')[1]}"
        if ((start is None or e.event_time >= start) and (end is None or e.event_time < end)
                and (name is None or e.event_name == name)
                and (principal is None or principal in (ident.arn, ident.access_key_id, role))
                and (resource is None or resource in e.resources)):
            hits.append(e.event_id)
    return hits


def test_criterion_7_query_oracle(criterion):
    with criterion(7, "lookup_events vs linear scan") as c:
        rng = random.Random(7)
        logs = {n: _random_log(n, rng) for n in (0, 1, 50, 1000, 10_000)}
        pages_total = 0
        for _ in range(200):
            n = rng.choice(list(logs))
            log = logs[n]
            lo, hi = (log[0].event_time, log[len(log) - 1].event_time) if n else (0, 10)
            start = rng.choice([None, rng.randint(lo - 10, hi + 10)])
            end = rng.choice([None, rng.randint(start if start is not None else lo - 10, hi + 10)])
            name = rng.choice([None, "GetObject", "AssumeRole", "ConsoleLogin"])
            principal = rng.choice([None, "arn:aws:iam::111122223333:user/u1", "arn:aws:iam::111122223333:role/R2",
                                    "AKIA0000000000000003"])
            resource = rng.choice([None, "arn:aws:s3:::bucket-0003"])
            size = rng.choice([1, 3, 50, 1000])
            got, token = [], None
            while True:
                page = lookup_events(log, EventQuery(start, end, name, principal, resource, size, token))
                pages_total += 1
                got += [e.event_id for e in page["events"]]
                token = page["next_page_token"]
                if token is None:
                    break
            assert got == _scan(log, start, end, name, principal, resource)
        c.detail = f"200 queries over logs of up to 10000 events, {pages_total} pages reassembled"


# --- 8 -----------------------------------------------------------------------------------


def _random_dag(rng: random.Random) -> list[AttackStep]:
    n = rng.randrange(2, 25)
    steps = []
    for i in range(n):
        deps = rng.sample(range(i), min(i, rng.randrange(0, 4)))
        steps.append(AttackStep(f"n{i}", anonymous("192.0.2.1"), ControlAction("ListBuckets", {}),
                                rng.randrange(0, 5_000_000), [f"n{j}" for j in deps]))
    rng.shuffle(steps)
    return steps


def _topo_oracle(steps: list[AttackStep]) -> list[str]:
    # repeatedly pick the ready step with the smallest (offset, declaration index)
    done: set[str] = set()
    order = []
    while len(order) < len(steps):
        ready = [(s.offset, i) for i, s in enumerate(steps)
                 if s.step_id not in done and all(d in done for d in s.depends_on)]
        _, i = min(ready)
        order.append(steps[i].step_id)
        done.add(steps[i].step_id)
    return order


def test_criterion_8_property_suites(criterion, corpus):
    with criterion(8, "property suites") as c:
        rng = random.Random(8)
        # threshold-curve monotonicity
        for _ in range(500):
            counts = [rng.randrange(0, 12) for _ in range(rng.randrange(1, 30))]
            curve = [m2_threshold(counts, n) for n in range(15)]
            assert curve[0] == 1.0 and all(x >= y for x, y in zip(curve, curve[1:]))
        # ROUGE-L bounds, symmetry, identity
        for _ in range(1000):
            a = [rng.choice(VOCAB) for _ in range(rng.randrange(0, 12))]
            b = [rng.choice(VOCAB) for _ in range(rng.randrange(0, 12))]
            s = rouge_l(a, b)
            assert 0.0 <= s <= 1.0 and s == rouge_l(b, a)
            assert not a or rouge_l(a, a) == 1.0
        # F-beta monotonicity in each rate, and f(r, r) = r
        grid = [i / 20 for i in range(21)]
        for beta in (0.5, 1.0, 3.0):
            for r in grid:
                assert abs(f_beta(r, r, beta) - r) < 1e-12
                row = [f_beta(r, p, beta) for p in grid]
                col = [f_beta(p, r, beta) for p in grid]
                assert all(x <= y + 1e-12 for x, y in zip(row, row[1:]))
                assert all(x <= y + 1e-12 for x, y in zip(col, col[1:]))
        # causal order under compression, 50 random DAGs
        for _ in range(50):
            steps = _random_dag(rng)
            factor = rng.choice([Fraction(1), Fraction(1, 60), Fraction(1, 10_000), Fraction(rng.randrange(1, 500), 97)])
            out = compress_timeline(steps, factor)
            assert _topo_oracle(out) == _topo_oracle(steps)
            t = {s.step_id: s.offset for s in out}
            assert all(t[d] < t[s.step_id] for s in out for d in s.depends_on)
        # evidence resolvability for every novel finding
        checked = 0
        for b in corpus:
            for f in b.ground_truth.novel():
                assert f.evidence and "lookup_events" in f.required_tools
                for ref in f.evidence:
                    if ref.kind is not EvidenceKind.EVENT_ID:
                        continue
                    e = b.log.get(ref.value)
                    res = answer_tool_call(b, ToolCall("c", "lookup_events", {
                        "start_time": format_ts(e.event_time), "end_time": format_ts(e.event_time + 1),
                        "event_name": e.event_name}))
                    assert res.ok and ref.value in {x["event_id"] for x in res.payload["events"]}
                    checked += 1
        c.detail = f"{checked} novel evidence events resolved across {len(corpus)} bundles"


# --- 9 -----------------------------------------------------------------------------------


def test_criterion_9_recorded_keyword_run(criterion, generated, keyword_run):
    """Agent-dependent results are out of reach without that agent; record the heuristic baseline instead."""
    with criterion(9, "recorded keyword-agent run (recorded, not asserted)") as c:
        run = json.loads((keyword_run / "run.json").read_text())
        rows = {}
        for mode in ValidationMode:
            dest = generated / f"keyword-{mode.value}"
            args = ["evaluate", "--corpus", str(generated / "a"), "--reports", str(keyword_run), "--out", str(dest)]
            assert main(args + (["--validated"] if mode is ValidationMode.VALIDATED else [])) == 0
            rows[mode] = json.loads((dest / "summary" / "summary.json").read_text())["rows"][OVERALL]
        raw, val = rows[ValidationMode.RAW], rows[ValidationMode.VALIDATED]
        c.detail = (f"raw m1_tp {raw['m1_tp']:.3f} m1_fp {raw['m1_fp']:.3f} F3 {raw['f_beta']:.3f} "
                    f"avg novel {raw['avg_novel_kf']:.2f}; validated m1_tp {val['m1_tp']:.3f}; "
                    f"{len(run['failures'])} sessions without a report")
        assert run["cases"] == 794
        assert val["m1_tp"] <= raw["m1_tp"]
