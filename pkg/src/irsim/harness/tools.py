"""Investigation tools: pure queries over a case bundle.

Only the environment snapshot, the event log and the alert are reachable from
here.  Ground truth is never read.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

from ..cloud import Account, Environment, IamPrincipal, PolicyDoc, S3Bucket
from ..core import day_of, format_ts, parse_ts
from ..scenario import CaseBundle
from ..telemetry import EventLog, EventQuery, EventQueryError, lookup_events
from .protocol import ToolCall, ToolResult

MAX_PAGE = 50


@dataclass(frozen=True)
class Param:
    name: str
    type: str  # "string" or "integer"
    required: bool = False
    description: str = ""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[Param, ...] = ()
    fn: Callable[[CaseBundle, dict], Any] = field(default=None, repr=False, compare=False)

    def schema(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": {p.name: {"type": p.type, "required": p.required, "description": p.description} for p in self.params},
        }


class ToolInputError(ValueError):
    pass


CATALOG: dict[str, ToolSpec] = {}


def tool(name: str, description: str, *params: Param):
    def register(fn: Callable[[CaseBundle, dict], Any]):
        CATALOG[name] = ToolSpec(name, description, params, fn)
        return fn
    return register


def catalog_schema() -> list[dict]:
    return [CATALOG[n].schema() for n in sorted(CATALOG)]


def _check_params(spec: ToolSpec, params: dict) -> dict:
    known = {p.name: p for p in spec.params}
    unknown = sorted(set(params) - set(known))
    if unknown:
        raise ToolInputError(f"unknown parameter(s) {', '.join(unknown)}")
    for p in spec.params:
        if p.name not in params or params[p.name] is None:
            if p.required:
                raise ToolInputError(f"missing required parameter {p.name!r}")
            continue
        v = params[p.name]
        ok = isinstance(v, str) if p.type == "string" else isinstance(v, int) and not isinstance(v, bool)
        if not ok:
            raise ToolInputError(f"parameter {p.name!r} must be a {p.type}")
    return params


def _hint(spec: ToolSpec) -> str:
    parts = [f"{p.name}:{p.type}{'' if p.required else '?'}" for p in spec.params]
    return f"{spec.name}({', '.join(parts)})"


def answer_tool_call(bundle: CaseBundle, call: ToolCall) -> ToolResult:
    """Answer one call from the bundle.  Unknown tools and bad parameters yield error results."""
    spec = CATALOG.get(call.tool)
    if spec is None:
        return ToolResult(call.call_id, error=f"unknown tool {call.tool!r}; available: {', '.join(sorted(CATALOG))}")
    try:
        _check_params(spec, call.parameters)
        return ToolResult(call.call_id, payload=spec.fn(bundle, call.parameters))
    except (ToolInputError, EventQueryError) as exc:
        return ToolResult(call.call_id, error=f"{exc}; expected {_hint(spec)}")
    except LookupError as exc:
        return ToolResult(call.call_id, error=f"not found: {exc.args[0] if exc.args else exc}")


# --- helpers -------------------------------------------------------------------------


def _visible(env: Environment) -> list[Account]:
    # third-party accounts are outside the investigator's reach
    return [a for a in env.accounts.values() if not a.external]


def _in_account(env: Environment, params: dict) -> list[Account]:
    accounts = _visible(env)
    wanted = params.get("account_id")
    if wanted is None:
        return accounts
    picked = [a for a in accounts if a.account_id == wanted]
    if not picked:
        raise LookupError(f"account {wanted}")
    return picked


def _policy_names(p: IamPrincipal) -> list[str]:
    return [d.name for d in p.attached_policies]


def _statements(doc: PolicyDoc | None) -> list[dict]:
    if doc is None:
        return []
    return [{"actions": list(s.actions), "resources": list(s.resources), "principals": list(s.principals)}
            for s in doc.statements]


def _principal_summary(p: IamPrincipal, acct: Account) -> dict:
    return {"name": p.name, "arn": str(p.arn), "account_id": acct.account_id, "created": format_ts(p.created),
            "tags": dict(p.tags)}


def _user_detail(p: IamPrincipal, acct: Account) -> dict:
    return {
        **_principal_summary(p, acct),
        "console_access": p.password_digest is not None,
        "mfa_enabled": p.mfa,
        "access_keys": [{"access_key_id": k.key_id, "status": k.status, "created": format_ts(k.created)} for k in p.access_keys],
        "attached_policies": _policy_names(p),
    }


def _role_detail(env: Environment, p: IamPrincipal, acct: Account) -> dict:
    trusted = [src for src, dst in env.trust_edges if dst == str(p.arn)]
    return {**_principal_summary(p, acct), "trusted_principals": trusted, "attached_policies": _policy_names(p)}


def _find(env: Environment, params: dict, kind: str, name: str) -> tuple[IamPrincipal, Account]:
    for acct in _in_account(env, params):
        for p in (acct.users() if kind == "user" else acct.roles()):
            if p.name == name:
                return p, acct
    raise LookupError(f"{kind} {name}")


def _bucket(env: Environment, name: str) -> tuple[Account, S3Bucket]:
    for acct in _visible(env):
        if name in acct.buckets:
            return acct, acct.buckets[name]
    raise LookupError(f"bucket {name}")


def _time(params: dict, key: str) -> int | None:
    if params.get(key) is None:
        return None
    try:
        return parse_ts(params[key])
    except ValueError:
        raise ToolInputError(f"{key} must be an ISO-8601 UTC timestamp like 2025-03-03T09:00:00Z") from None


# --- tools ---------------------------------------------------------------------------


@tool("lookup_events", "Query the audit log; filters are conjunctive, results are time-ordered and paginated.",
      Param("start_time", "string", description="inclusive ISO-8601 UTC"),
      Param("end_time", "string", description="exclusive ISO-8601 UTC"),
      Param("event_name", "string"), Param("principal", "string", description="identity ARN or access key id"),
      Param("resource", "string", description="resource ARN"),
      Param("max_results", "integer", description=f"1..{MAX_PAGE}, default {MAX_PAGE}"),
      Param("next_token", "string"))
def _lookup_events(bundle: CaseBundle, params: dict) -> dict:
    size = params.get("max_results", MAX_PAGE)
    if not 1 <= size <= MAX_PAGE:
        raise ToolInputError(f"max_results must be between 1 and {MAX_PAGE}")
    q = EventQuery(_time(params, "start_time"), _time(params, "end_time"), params.get("event_name"),
                   params.get("principal"), params.get("resource"), size, params.get("next_token"))
    page = lookup_events(bundle.log, q)
    return {"events": [e.to_dict() for e in page["events"]], "next_token": page["next_page_token"]}


@tool("list_users", "IAM users with console, MFA, key and policy details.", Param("account_id", "string"))
def _list_users(bundle: CaseBundle, params: dict) -> dict:
    env = bundle.environment
    return {"users": [_user_detail(p, a) for a in _in_account(env, params) for p in sorted(a.users(), key=lambda x: x.name)]}


@tool("get_user", "One IAM user.", Param("user_name", "string", True), Param("account_id", "string"))
def _get_user(bundle: CaseBundle, params: dict) -> dict:
    p, acct = _find(bundle.environment, params, "user", params["user_name"])
    return {"user": _user_detail(p, acct)}


@tool("list_roles", "IAM roles with their trusted principals.", Param("account_id", "string"))
def _list_roles(bundle: CaseBundle, params: dict) -> dict:
    env = bundle.environment
    return {"roles": [_role_detail(env, p, a) for a in _in_account(env, params) for p in sorted(a.roles(), key=lambda x: x.name)]}


@tool("get_role", "One IAM role including its trust policy.", Param("role_name", "string", True), Param("account_id", "string"))
def _get_role(bundle: CaseBundle, params: dict) -> dict:
    env = bundle.environment
    p, acct = _find(env, params, "role", params["role_name"])
    return {"role": {**_role_detail(env, p, acct), "trust_policy": _statements(p.trust_policy)}}


@tool("list_role_policies", "Policies attached to a role, with their statements.",
      Param("role_name", "string", True), Param("account_id", "string"))
def _list_role_policies(bundle: CaseBundle, params: dict) -> dict:
    p, _ = _find(bundle.environment, params, "role", params["role_name"])
    return {"policies": [{"name": d.name, "statements": _statements(d)} for d in p.attached_policies]}


@tool("list_buckets", "S3 buckets with public-access flags.")
def _list_buckets(bundle: CaseBundle, params: dict) -> dict:
    out = []
    for acct in _visible(bundle.environment):
        for b in sorted(acct.buckets.values(), key=lambda x: x.name):
            out.append({"name": b.name, "arn": str(b.arn), "account_id": acct.account_id, "public": b.public,
                        "created": format_ts(b.created), "tags": dict(b.tags)})
    return {"buckets": out}


@tool("get_bucket_policy", "Resource policy of one bucket.", Param("bucket", "string", True))
def _get_bucket_policy(bundle: CaseBundle, params: dict) -> dict:
    _, b = _bucket(bundle.environment, params["bucket"])
    return {"bucket": b.name, "public": b.public, "statements": _statements(b.policy)}


@tool("list_objects", "Objects in a bucket.", Param("bucket", "string", True), Param("prefix", "string"))
def _list_objects(bundle: CaseBundle, params: dict) -> dict:
    _, b = _bucket(bundle.environment, params["bucket"])
    prefix = params.get("prefix", "")
    return {"bucket": b.name, "objects": [
        {"key": o.key, "size": o.size, "last_modified": format_ts(o.last_modified)}
        for o in sorted(b.objects, key=lambda o: o.key) if o.key.startswith(prefix)]}


@tool("describe_instances", "EC2 instances, optionally one by id or name.", Param("instance_id", "string"))
def _describe_instances(bundle: CaseBundle, params: dict) -> dict:
    wanted = params.get("instance_id")
    out = []
    for acct in _visible(bundle.environment):
        for i in sorted(acct.instances.values(), key=lambda x: x.instance_id):
            if wanted is not None and wanted not in (i.instance_id, i.name):
                continue
            out.append({"instance_id": i.instance_id, "name": i.name, "arn": str(i.arn), "account_id": acct.account_id,
                        "state": i.state.value, "instance_type": i.instance_type, "image_id": i.image_id,
                        "launch_time": format_ts(i.launch_time), "instance_profile": str(i.profile) if i.profile else None,
                        "security_groups": list(i.security_groups), "ssm_managed": i.ssm_managed, "user_data": i.user_data})
    if wanted is not None and not out:
        raise LookupError(f"instance {wanted}")
    return {"instances": out}


@tool("describe_security_groups", "Security groups and their ingress rules.", Param("group_id", "string"))
def _describe_security_groups(bundle: CaseBundle, params: dict) -> dict:
    wanted = params.get("group_id")
    out = []
    for acct in _visible(bundle.environment):
        for g in sorted(acct.security_groups.values(), key=lambda x: x.group_id):
            if wanted is not None and wanted not in (g.group_id, g.name):
                continue
            out.append({"group_id": g.group_id, "name": g.name, "arn": str(g.arn), "account_id": acct.account_id,
                        "ingress": [{"port": r.port, "cidr": r.cidr, "protocol": r.protocol} for r in g.ingress]})
    if wanted is not None and not out:
        raise LookupError(f"security group {wanted}")
    return {"security_groups": out}


# Simulated list prices in USD.  Requests cost a per-service rate; launches are
# priced per instance for the remainder of the day.
REQUEST_PRICE = {"s3": 0.0004, "ec2": 0.0001, "iam": 0.0, "sts": 0.0, "ssm": 0.005, "signin": 0.0, "cloudtrail": 0.0}
INSTANCE_DAY_PRICE = {"t3.micro": 0.25, "t3.medium": 1.0, "m5.large": 2.3, "c5.xlarge": 4.08, "r5.large": 3.02,
                      "p3.2xlarge": 73.44, "g4dn.xlarge": 12.62, "c5.24xlarge": 97.92}
DEFAULT_INSTANCE_DAY_PRICE = 5.0


def event_cost(e) -> tuple[str, float]:
    service = e.event_source.split(".")[0]
    cost = REQUEST_PRICE.get(service, 0.0)
    if e.event_name == "RunInstances" and e.error_code is None:
        items = (e.response_elements or {}).get("instancesSet", {}).get("items", [])
        per = INSTANCE_DAY_PRICE.get(e.request_parameters.get("instanceType"), DEFAULT_INSTANCE_DAY_PRICE)
        cost += per * max(1, len(items))
    return service, cost


def cost_and_usage(log: EventLog, start: int | None = None, end: int | None = None) -> list[dict]:
    totals: dict[tuple[str, str], float] = defaultdict(float)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for i in log.index_range(start, end):
        e = log[i]
        service, cost = event_cost(e)
        key = (day_of(e.event_time), service)
        totals[key] += cost
        counts[key] += 1
    return [{"day": d, "service": s, "cost_usd": round(totals[(d, s)], 4), "requests": counts[(d, s)]}
            for d, s in sorted(totals)]


@tool("get_cost_and_usage", "Simulated spend per service and day, derived from account activity.",
      Param("start_time", "string"), Param("end_time", "string"))
def _get_cost_and_usage(bundle: CaseBundle, params: dict) -> dict:
    return {"results": cost_and_usage(bundle.log, _time(params, "start_time"), _time(params, "end_time"))}
