"""Reference agents.

All four are scripted and deterministic.  ``oracle`` reads the ground truth
out of band and bounds scores from above; ``parrot`` restates the alert;
``random`` is a noise floor; ``keyword`` is a shallow heuristic investigator.

Each agent is a generator usable in-process, and ``python -m
irsim.harness.agents NAME`` runs it over the stdio protocol.
"""

from __future__ import annotations

import argparse
import ipaddress
import json
import random
import sys
from collections import OrderedDict
from pathlib import Path
from typing import Callable

from ..core import MS_PER_DAY, Category, Verdict, derive_seed, format_ts, parse_ts
from ..scenario import GroundTruth
from .protocol import MessageType, decode, encode
from .session import AgentGenerator, InProcessAgent

PAGE_BUDGET = 30


def _call(tool: str, **params) -> dict:
    return {"tool": tool, "parameters": params}


def _report(start: dict, verdict: Verdict | str, claims: list[dict], narrative: str | None = None) -> dict:
    return {"case_id": start["case_id"], "verdict": Verdict(verdict).value, "claims": claims, "narrative": narrative}


def _survey(tools: list[str]) -> AgentGenerator:
    """Invoke each named tool once, deriving required parameters from earlier listings."""
    got: dict[str, dict] = {}

    def listing(tool: str) -> AgentGenerator:
        if tool not in got:
            got[tool] = yield _call(tool)
        return got[tool].get("payload") or {}

    for name in tools:
        if name in ("get_user",):
            users = (yield from listing("list_users")).get("users", [])
            if users:
                yield _call("get_user", user_name=users[0]["name"])
        elif name in ("get_role", "list_role_policies"):
            roles = (yield from listing("list_roles")).get("roles", [])
            if roles:
                yield _call(name, role_name=roles[0]["name"])
        elif name in ("get_bucket_policy", "list_objects"):
            buckets = (yield from listing("list_buckets")).get("buckets", [])
            if buckets:
                yield _call(name, bucket=buckets[0]["name"])
        else:
            yield from listing(name)


# --- oracle --------------------------------------------------------------------------


def oracle_agent(corpus: str | Path) -> InProcessAgent:
    root = Path(corpus)

    def agent(start: dict) -> AgentGenerator:
        from ..evaluator.metrics import DEFAULT_EXPECTED_TOOLS

        path = root / "cases" / start["case_id"] / "ground_truth.json"
        if not path.exists():
            path = root / start["case_id"] / "ground_truth.json"
        gt = GroundTruth.from_dict(json.loads(path.read_text(encoding="utf-8")))
        wanted = list(DEFAULT_EXPECTED_TOOLS[Category(start["alert"]["category"])])
        for f in gt.findings:
            wanted += [t for t in f.required_tools if t not in wanted]
        yield from _survey(wanted)
        claims = [{"statement": f.statement, "evidence_refs": [{"kind": a.kind.value, "value": a.value} for a in f.evidence]}
                  for f in gt.findings]
        return _report(start, gt.verdict, claims, "Reference answer.")

    return agent


# --- parrot --------------------------------------------------------------------------


def parrot_agent(start: dict) -> AgentGenerator:
    return _report(start, Verdict.TP, [{"statement": start["alert"]["description"], "evidence_refs": []}])
    yield  # pragma: no cover - makes this a generator


# --- random --------------------------------------------------------------------------


_NO_ARG_TOOLS = ("lookup_events", "list_users", "list_roles", "list_buckets", "describe_instances",
                 "describe_security_groups", "get_cost_and_usage")


def random_agent(seed: int = 0) -> InProcessAgent:
    def agent(start: dict) -> AgentGenerator:
        rng = random.Random(derive_seed(seed, start["case_id"]))
        seen: list[dict] = []
        for _ in range(rng.randrange(0, 7)):
            result = yield _call(rng.choice(_NO_ARG_TOOLS))
            seen += (result.get("payload") or {}).get("events", [])
        claims = []
        for e in rng.sample(seen, min(len(seen), rng.randrange(0, 4))):
            who = e["user_identity"]["arn"] or "an anonymous caller"
            claims.append({"statement": f"{e['event_name']} was called by {who}",
                           "evidence_refs": [{"kind": "event_id", "value": e["event_id"]}]})
        return _report(start, rng.choice([Verdict.TP, Verdict.FP]), claims)

    return agent


# --- keyword heuristic -------------------------------------------------------------


_ALERT_TOOLS = (
    ("sign-in", ("list_users", "get_user")),
    ("role", ("list_roles", "get_role")),
    ("bucket", ("list_buckets", "get_bucket_policy")),
    ("systems manager", ("describe_instances",)),
)
_WATCH = {
    "ConsoleLogin", "CreateUser", "CreateAccessKey", "AttachUserPolicy", "AttachRolePolicy", "PutUserPolicy",
    "UpdateAssumeRolePolicy", "CreateLoginProfile", "UpdateLoginProfile", "AssumeRole", "ListBuckets",
    "GetObject", "SelectObjectContent", "PutObject", "DeleteObject", "PutBucketPolicy", "PutBucketAcl",
    "AuthorizeSecurityGroupIngress", "RunInstances", "SendCommand", "CreateAssociation", "StartSession",
    "StopLogging", "DeleteTrail", "ModifyInstanceAttribute", "TerminateInstances", "StopInstances",
}
_READS = {"GetObject", "SelectObjectContent", "ListBuckets"}
_BENIGN_MARKERS = ("chg-", "change-ticket", "pipeline", "externalid", '"mfaused": "yes"')


def _internal(ip: str | None) -> bool:
    if not ip:
        return False
    try:
        return ipaddress.ip_address(ip).is_private and not ipaddress.ip_address(ip).is_reserved
    except ValueError:
        return True  # service principals such as ssm.amazonaws.com


def _actor(e: dict) -> str:
    ident = e["user_identity"]
    arn = ident.get("arn")
    if not arn:
        return "an anonymous client"
    return arn.rsplit("/", 2)[-2] if ":assumed-role/" in arn else arn.rsplit("/", 1)[-1]


def _describe(actor: str, name: str, ip: str, evs: list[dict]) -> str:
    req = evs[0].get("request_parameters") or {}
    if name == "CreateUser":
        return f"{actor} created new IAM user {req.get('userName')} from {ip}"
    if name == "CreateAccessKey":
        return f"{actor} issued an access key for user {req.get('userName')} from {ip}"
    if name in ("PutBucketPolicy", "PutBucketAcl"):
        return f"{actor} changed access on bucket {req.get('bucketName')} from {ip}"
    if name == "AssumeRole":
        return f"{actor} assumed {req.get('roleArn', '').rsplit('/', 1)[-1]} from {ip}"
    failed = sum(1 for e in evs if e.get("error_code"))
    return f"{actor} called {name} {len(evs)} time(s)" + (f", {failed} failed" if failed else "") + f" from {ip}"


def keyword_agent(start: dict) -> AgentGenerator:
    alert = start["alert"]
    text = alert["description"].lower()
    for marker, tools in _ALERT_TOOLS:
        if marker in text:
            yield from _survey(list(tools))
    fired = parse_ts(alert["fired_at"])
    params = {"start_time": format_ts(fired - MS_PER_DAY), "end_time": format_ts(fired + MS_PER_DAY)}
    events: list[dict] = []
    token = None
    for _ in range(PAGE_BUDGET):
        q = dict(params, **({"next_token": token} if token else {}))
        page = (yield _call("lookup_events", **q)).get("payload") or {}
        events += page.get("events", [])
        token = page.get("next_token")
        if not token:
            break

    groups: OrderedDict[tuple[str, str, str], list[dict]] = OrderedDict()
    benign = 0
    for e in events:
        blob = json.dumps(e, sort_keys=True).lower()
        if any(m in blob for m in _BENIGN_MARKERS):
            benign += 1
        if e["event_name"] not in _WATCH:
            continue
        if _internal(e.get("source_ip")):
            continue
        groups.setdefault((_actor(e), e["event_name"], e.get("source_ip") or "?"), []).append(e)

    claims = []
    for (actor, name, ip), evs in groups.items():
        claims.append({"statement": _describe(actor, name, ip, evs),
                       "evidence_refs": [{"kind": "event_id", "value": e["event_id"]} for e in evs[:5]]})
    risky = [k for k in groups if k[1] not in _READS]
    verdict = Verdict.FP if benign and len(risky) <= 2 else Verdict.TP
    return _report(start, verdict, claims[:15], f"{len(events)} events reviewed, {benign} with benign markers.")


# --- stdio driver ------------------------------------------------------------------


def serve(agent: InProcessAgent, stdin=sys.stdin, stdout=sys.stdout) -> int:
    """Speak the line protocol on stdio for one case."""
    line = stdin.readline()
    if not line:
        return 1
    kind, start = decode(line)
    if kind is not MessageType.CASE_START:
        return 1
    gen = agent(start)
    n = 0
    try:
        msg = next(gen)
        while True:
            n += 1
            stdout.write(encode(MessageType.TOOL_CALL, {"call_id": f"c{n:03d}", **msg}) + "\n")
            stdout.flush()
            line = stdin.readline()
            if not line:
                return 0
            _, result = decode(line)
            msg = gen.send(result)
    except StopIteration as stop:
        stdout.write(encode(MessageType.FINAL_REPORT, {"report": stop.value}) + "\n")
        stdout.flush()
    return 0


REFERENCE_AGENTS = ("oracle", "parrot", "random", "keyword")


def make_agent(name: str, corpus: str | Path | None = None, seed: int = 0) -> InProcessAgent:
    if name == "oracle":
        if corpus is None:
            raise ValueError("the oracle agent needs the corpus directory")
        return oracle_agent(corpus)
    builders: dict[str, Callable[[], InProcessAgent]] = {
        "parrot": lambda: parrot_agent,
        "random": lambda: random_agent(seed),
        "keyword": lambda: keyword_agent,
    }
    if name not in builders:
        raise ValueError(f"unknown reference agent {name!r}; choose from {', '.join(REFERENCE_AGENTS)}")
    return builders[name]()


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python -m irsim.harness.agents", description="Run a reference agent on stdio.")
    ap.add_argument("name", choices=REFERENCE_AGENTS)
    ap.add_argument("--corpus", help="corpus directory (oracle only)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    return serve(make_agent(args.name, args.corpus, args.seed))


if __name__ == "__main__":
    sys.exit(main())
