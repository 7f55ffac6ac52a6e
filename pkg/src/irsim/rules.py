"""Finding rulebook: turns an executed trace into templated ground-truth findings.

Each rule looks at the events emitted by non-background steps and produces
zero or more drafts.  Statements use canonical names (user, role and bucket
names, instance ids, addresses) and never depend on which of two
interchangeable API calls was used, so technique swaps leave them unchanged.
Malicious rules only see malicious steps; benign-explanation rules only run
when the case has no malicious step at all.
"""

from __future__ import annotations

import re
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .cloud import ADMIN_POLICIES
from .core import Category, Verdict
from .scenario import (
    Alert,
    EvidenceArtifact,
    EvidenceKind,
    Finding,
    Intent,
    TraceEntry,
    alert_slots,
    short_identity,
)
from .telemetry import CloudEvent, EventLog, IdentityKind

LOOKUP = "lookup_events"

RECON_IAM = {
    "ListUsers", "ListRoles", "GetAccountAuthorizationDetails", "GetUser", "GetRole",
    "ListAttachedRolePolicies", "ListAttachedUserPolicies",
}
RECON_EC2 = {"DescribeInstances", "DescribeSecurityGroups"}
OBJECT_READS = {"GetObject", "SelectObjectContent"}
OBJECT_LISTS = {"ListObjects", "ListObjectsV2"}
COMMANDS = {"SendCommand", "CreateAssociation"}

_URL_RE = re.compile(r"(?:https?|s3)://[^\s'\"|;]+")
_DEV_TCP_RE = re.compile(r"/dev/tcp/([^/\s]+)/(\d+)")
_NC_RE = re.compile(r"\bnc(?:at)?\s+(?:-\w+\s+\S+\s+)*([0-9][0-9.]+)\s+(\d+)")
_PERSIST_MARKERS = ("crontab", "systemctl enable", "rc.local", "/etc/cron")


@dataclass
class Draft:
    rule: str
    statement: str
    event_ids: list[str]
    tools: list[str]
    arns: list[str] = field(default_factory=list)


@dataclass
class RuleContext:
    category: Category
    verdict: Verdict
    malicious: list[CloudEvent]
    benign: list[CloudEvent]
    alert: Alert
    trigger: list[CloudEvent]
    log: EventLog
    exfil_reads: int

    @property
    def trigger_ids(self) -> set[str]:
        return {e.event_id for e in self.trigger}


Rule = Callable[[RuleContext], list[Draft]]
RULES: dict[str, Rule] = {}


def rule(name: str):
    def register(fn: Rule) -> Rule:
        RULES[name] = fn
        return fn
    return register


# --- helpers ------------------------------------------------------------------------


def _ok(events: Sequence[CloudEvent], names: set[str] | str) -> list[CloudEvent]:
    wanted = {names} if isinstance(names, str) else names
    return [e for e in events if e.event_name in wanted and e.succeeded]


def _tail(arn: str) -> str:
    return arn.rsplit("/", 1)[-1].rsplit(":", 1)[-1]


def _listing(items: Sequence[str], limit: int = 3) -> str:
    items = list(dict.fromkeys(items))
    if len(items) <= limit:
        return ", ".join(items)
    return ", ".join(items[:limit]) + f" and {len(items) - limit} more"


def _arn_of(e: CloudEvent, marker: str) -> str | None:
    return next((r for r in e.resources if marker in r), None)


def _account_of(arn: str) -> str:
    parts = arn.split(":")
    return parts[4] if len(parts) > 4 else ""


def _commands(e: CloudEvent) -> list[str]:
    return list(e.request_parameters.get("parameters", {}).get("commands", []))


def _instance_id(e: CloudEvent) -> str:
    p = e.request_parameters
    return p.get("instanceId") or (p.get("instanceIds") or [""])[0] or p.get("target", "")


def _where(ip: str) -> str:
    return f"corporate address {ip}" if ip.startswith("10.") else f"address {ip}"


# --- alert restatement (never novel: needs no tool) -------------------------------

_RESTATEMENTS = {
    Category.BRUTE_FORCE: "{count} failed console sign-in attempts targeted user {user} from {ip}",
    Category.UNAUTHORIZED_ACCESS: "Role {role} was assumed by {principal} from {ip}",
    Category.MISCONFIGURATION: "Bucket {bucket} in account {account} was made publicly readable",
    Category.MALICIOUS_FILE_EXECUTION: "A Systems Manager shell command was executed on instance {instance}",
}


@rule("alert_restatement")
def _alert_restatement(ctx: RuleContext) -> list[Draft]:
    slots = alert_slots(ctx.category, ctx.trigger)
    text = _RESTATEMENTS[ctx.category].format_map(slots)
    return [Draft("alert_restatement", text, [e.event_id for e in ctx.trigger], [])]


# --- identity and credential rules ------------------------------------------------


@rule("login_success")
def _login_success(ctx: RuleContext) -> list[Draft]:
    out = []
    guessed: set[str] = set()
    for e in ctx.malicious:
        if e.event_name != "ConsoleLogin":
            continue
        user = e.request_parameters.get("userName", short_identity(e))
        if not e.succeeded:
            guessed.add(user)
            continue
        how = "after repeated password guesses" if user in guessed else "with a password the intruder had set"
        out.append(Draft("login_success", f"Attacker signed in to the console as {user} from {e.source_ip} {how}",
                         [e.event_id], [LOOKUP]))
    return out


@rule("stuffing_other_users")
def _stuffing_other_users(ctx: RuleContext) -> list[Draft]:
    slots = alert_slots(ctx.category, ctx.trigger) if ctx.category is Category.BRUTE_FORCE else {}
    target = slots.get("user")
    failed = [
        e for e in ctx.malicious
        if e.event_name == "ConsoleLogin" and not e.succeeded and e.event_id not in ctx.trigger_ids
        and e.request_parameters.get("userName") != target
    ]
    if not failed:
        return []
    users = [e.request_parameters.get("userName", "?") for e in failed]
    return [Draft(
        "stuffing_other_users",
        f"The same campaign also guessed passwords for {_listing(users)}",
        [e.event_id for e in failed], [LOOKUP, "list_users"],
    )]


@rule("iam_recon")
def _iam_recon(ctx: RuleContext) -> list[Draft]:
    by_actor: dict[str, list[CloudEvent]] = OrderedDict()
    for e in ctx.malicious:
        if e.event_name in RECON_IAM:
            by_actor.setdefault(short_identity(e), []).append(e)
    return [
        Draft("iam_recon", f"{actor} enumerated IAM identities and their attached permissions",
              [e.event_id for e in evs], [LOOKUP])
        for actor, evs in by_actor.items()
    ]


@rule("ec2_recon")
def _ec2_recon(ctx: RuleContext) -> list[Draft]:
    by_actor: dict[str, list[CloudEvent]] = OrderedDict()
    for e in ctx.malicious:
        if e.event_name in RECON_EC2:
            by_actor.setdefault(short_identity(e), []).append(e)
    return [
        Draft("ec2_recon", f"{actor} surveyed EC2 hosts and firewall rules across the region",
              [e.event_id for e in evs], [LOOKUP])
        for actor, evs in by_actor.items()
    ]


@rule("user_created")
def _user_created(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, "CreateUser"):
        name = e.request_parameters["userName"]
        out.append(Draft("user_created", f"{short_identity(e)} created new IAM user {name}",
                         [e.event_id], [LOOKUP, "list_users"], list(e.resources)))
    return out


def _created_keys(events: Sequence[CloudEvent]) -> dict[str, CloudEvent]:
    out = {}
    for e in _ok(events, "CreateAccessKey"):
        out[e.response_elements["accessKey"]["accessKeyId"]] = e
    return out


@rule("key_created")
def _key_created(ctx: RuleContext) -> list[Draft]:
    out = []
    for key, e in _created_keys(ctx.malicious).items():
        user = e.request_parameters["userName"]
        out.append(Draft("key_created", f"{short_identity(e)} issued access key {key} for user {user}",
                         [e.event_id], [LOOKUP, "get_user"], list(e.resources)))
    return out


@rule("persistence")
def _persistence(ctx: RuleContext) -> list[Draft]:
    created = {e.request_parameters["userName"]: e for e in _ok(ctx.malicious, "CreateUser")}
    out = []
    for key, e in _created_keys(ctx.malicious).items():
        user = e.request_parameters["userName"]
        if user in created:
            out.append(Draft(
                "persistence",
                f"Backdoor user {user} holding key {key} gives the intruder lasting access",
                [created[user].event_id, e.event_id], [LOOKUP, "list_users"], list(e.resources),
            ))
    return out


@rule("backdoor_key_use")
def _backdoor_key_use(ctx: RuleContext) -> list[Draft]:
    keys = _created_keys(ctx.malicious)
    out = []
    for key, made in keys.items():
        used = [e for e in ctx.malicious if e.user_identity.access_key_id == key and e.event_id != made.event_id]
        if used:
            ips = _listing([e.source_ip for e in used], 2)
            out.append(Draft(
                "backdoor_key_use",
                f"Key {key} was then used from {ips} for {len(used)} API calls such as {used[0].event_name}",
                [e.event_id for e in used], [LOOKUP],
            ))
    return out


@rule("privilege_escalation")
def _privilege_escalation(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, {"AttachUserPolicy", "AttachRolePolicy"}):
        policy = _tail(e.request_parameters["policyArn"])
        if policy not in ADMIN_POLICIES:
            continue
        target = e.request_parameters.get("userName") or e.request_parameters.get("roleName")
        tool = "get_user" if e.event_name == "AttachUserPolicy" else "list_role_policies"
        out.append(Draft("privilege_escalation",
                         f"{short_identity(e)} attached {policy} to {target}, granting administrator rights",
                         [e.event_id], [LOOKUP, tool], list(e.resources)))
    return out


@rule("broad_policy")
def _broad_policy(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, {"AttachUserPolicy", "AttachRolePolicy"}):
        policy = _tail(e.request_parameters["policyArn"])
        if policy in ADMIN_POLICIES:
            continue
        target = e.request_parameters.get("userName") or e.request_parameters.get("roleName")
        tool = "get_user" if e.event_name == "AttachUserPolicy" else "list_role_policies"
        out.append(Draft("broad_policy", f"Overly broad managed policy {policy} was bound to {target} by {short_identity(e)}",
                         [e.event_id], [LOOKUP, tool], list(e.resources)))
    return out


@rule("login_profile_backdoor")
def _login_profile_backdoor(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("login_profile_backdoor",
              f"{short_identity(e)} set a new console password for {e.request_parameters['userName']}",
              [e.event_id], [LOOKUP, "get_user"], list(e.resources))
        for e in _ok(ctx.malicious, {"CreateLoginProfile", "UpdateLoginProfile"})
    ]


@rule("trust_backdoor")
def _trust_backdoor(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, "UpdateAssumeRolePolicy"):
        trusted = _tail(e.request_parameters["policyDocument"]["Principal"]["AWS"])
        out.append(Draft("trust_backdoor",
                         f"Trust policy of {e.request_parameters['roleName']} was rewritten to admit {trusted}",
                         [e.event_id], [LOOKUP, "get_role"], list(e.resources)))
    return out


@rule("logging_disabled")
def _logging_disabled(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("logging_disabled", f"{short_identity(e)} halted CloudTrail trail {e.request_parameters['name']} to blind auditing",
              [e.event_id], [LOOKUP], list(e.resources))
        for e in _ok(ctx.malicious, "StopLogging")
    ]


@rule("failed_access")
def _failed_access(ctx: RuleContext) -> list[Draft]:
    by_actor: dict[str, list[CloudEvent]] = OrderedDict()
    for e in ctx.malicious:
        if e.error_code == "AccessDenied" and e.event_id not in ctx.trigger_ids:
            by_actor.setdefault(short_identity(e), []).append(e)
    return [
        Draft("failed_access", f"{actor} hit AccessDenied {len(evs)} time(s), first on {evs[0].event_name}",
              [e.event_id for e in evs], [LOOKUP])
        for actor, evs in by_actor.items()
    ]


# --- role rules ---------------------------------------------------------------------


def _assumptions(events: Sequence[CloudEvent]) -> list[CloudEvent]:
    return _ok(events, "AssumeRole")


@rule("role_hop")
def _role_hop(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _assumptions(ctx.malicious):
        if e.event_id in ctx.trigger_ids:
            continue
        role_arn = e.request_parameters["roleArn"]
        out.append(Draft("role_hop",
                         f"{short_identity(e)} pivoted into {_tail(role_arn)} of account {_account_of(role_arn)}",
                         [e.event_id], [LOOKUP, "get_role"], [role_arn]))
    return out


@rule("role_chain")
def _role_chain(ctx: RuleContext) -> list[Draft]:
    # a hop continues a chain when its caller is the role assumed by an earlier hop
    paths: dict[str, list[CloudEvent]] = {}
    best: list[CloudEvent] = []
    for e in _assumptions(ctx.malicious):
        prev = paths.get(e.user_identity.issuer_arn or "", [])
        path = prev + [e]
        paths[e.request_parameters["roleArn"]] = path
        if len(path) > len(best):
            best = path
    if len(best) < 2:
        return []
    roles = " then ".join(_tail(e.request_parameters["roleArn"]) for e in best)
    return [Draft("role_chain", f"Intruder chained role sessions: {roles}",
                  [e.event_id for e in best], [LOOKUP, "list_roles"])]


@rule("cross_account_trust")
def _cross_account_trust(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _assumptions(ctx.malicious):
        role_arn = e.request_parameters["roleArn"]
        src = e.user_identity.issuer_arn or ""
        if e.user_identity.account_id and e.user_identity.account_id != _account_of(role_arn):
            out.append(Draft("cross_account_trust",
                             f"{_tail(role_arn)} trusts {_tail(src)} from foreign account {e.user_identity.account_id}",
                             [e.event_id], ["get_role", LOOKUP], [role_arn]))
    return out


# --- storage rules --------------------------------------------------------------------


@rule("bucket_enumeration")
def _bucket_enumeration(ctx: RuleContext) -> list[Draft]:
    out = []
    listed = [e for e in ctx.malicious if e.event_name == "ListBuckets"]
    if listed:
        out.append(Draft("bucket_enumeration", f"{short_identity(listed[0])} listed every S3 bucket in the account",
                         [e.event_id for e in listed], [LOOKUP, "list_buckets"]))
    by_bucket: dict[tuple[str, str], list[CloudEvent]] = OrderedDict()
    for e in ctx.malicious:
        if e.event_name in OBJECT_LISTS:
            by_bucket.setdefault((short_identity(e), e.request_parameters["bucketName"]), []).append(e)
    for (actor, bucket), evs in by_bucket.items():
        out.append(Draft("bucket_enumeration", f"{actor} browsed the contents of bucket {bucket}",
                         [e.event_id for e in evs], [LOOKUP, "list_buckets"], [_arn_of(evs[0], ":s3:") or ""]))
    return out


@rule("object_access")
def _object_access(ctx: RuleContext) -> list[Draft]:
    groups: dict[tuple[str, str, str], list[CloudEvent]] = OrderedDict()
    for e in _ok(ctx.malicious, OBJECT_READS):
        groups.setdefault((short_identity(e), e.request_parameters["bucketName"], e.source_ip), []).append(e)
    out = []
    for (actor, bucket, ip), evs in groups.items():
        arn = [_arn_of(evs[0], ":s3:") or ""]
        if actor == "anonymous":
            out.append(Draft("object_access", f"Anonymous clients at {ip} downloaded {len(evs)} objects from {bucket}",
                             [e.event_id for e in evs], [LOOKUP, "list_objects"], arn))
        elif len(evs) >= ctx.exfil_reads:
            out.append(Draft("object_access", f"{actor} exfiltrated {len(evs)} objects from {bucket} to {ip}",
                             [e.event_id for e in evs], [LOOKUP, "list_objects"], arn))
        else:
            for e in evs:
                out.append(Draft("object_access", f"{actor} downloaded {e.request_parameters['key']} from {bucket}",
                                 [e.event_id], [LOOKUP, "list_objects"], arn))
    return out


@rule("data_write")
def _data_write(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("data_write", f"{short_identity(e)} uploaded {e.request_parameters['key']} into {e.request_parameters['bucketName']}",
              [e.event_id], [LOOKUP, "list_objects"], list(e.resources))
        for e in _ok(ctx.malicious, "PutObject")
    ]


@rule("object_deleted")
def _object_deleted(ctx: RuleContext) -> list[Draft]:
    groups: dict[tuple[str, str], list[CloudEvent]] = OrderedDict()
    for e in _ok(ctx.malicious, "DeleteObject"):
        groups.setdefault((short_identity(e), e.request_parameters["bucketName"]), []).append(e)
    return [
        Draft("object_deleted", f"{actor} deleted {len(evs)} objects from {bucket}",
              [e.event_id for e in evs], [LOOKUP, "list_objects"])
        for (actor, bucket), evs in groups.items()
    ]


def _is_public_change(e: CloudEvent) -> bool:
    p = e.request_parameters
    if e.event_name == "PutBucketAcl":
        return p.get("x-amz-acl") == "public-read"
    if e.event_name == "PutBucketPolicy":
        return any(s.get("Principal") == "*" for s in p.get("bucketPolicy", {}).get("Statement", []))
    return False


@rule("exposure_actor")
def _exposure_actor(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("exposure_actor", f"{short_identity(e)} opened {e.request_parameters['bucketName']} to everyone, acting from {e.source_ip}",
              [e.event_id], [LOOKUP, "get_bucket_policy"], list(e.resources))
        for e in _ok(ctx.malicious, {"PutBucketPolicy", "PutBucketAcl"}) if _is_public_change(e)
    ]


@rule("cross_account_grant")
def _cross_account_grant(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, "PutBucketPolicy"):
        grantees = [s.get("Principal") for s in e.request_parameters.get("bucketPolicy", {}).get("Statement", [])]
        foreign = [g for g in grantees if g != "*"]
        if foreign:
            out.append(Draft("cross_account_grant",
                             f"{short_identity(e)} shared {e.request_parameters['bucketName']} with outside account {_listing(foreign)}",
                             [e.event_id], [LOOKUP, "get_bucket_policy"], list(e.resources)))
    return out


@rule("sg_opened")
def _sg_opened(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, "AuthorizeSecurityGroupIngress"):
        perm = e.request_parameters["ipPermissions"]["items"][0]
        cidr = perm["ipRanges"]["items"][0]["cidrIp"]
        where = "the whole internet" if cidr == "0.0.0.0/0" else cidr
        out.append(Draft("sg_opened", f"Firewall group {e.request_parameters['groupId']} now admits {where} on port {perm['fromPort']}",
                         [e.event_id], [LOOKUP, "describe_security_groups"], list(e.resources)))
    return out


# --- compute rules ------------------------------------------------------------------


@rule("command_download")
def _command_download(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, COMMANDS):
        for url in dict.fromkeys(u for c in _commands(e) for u in _URL_RE.findall(c)):
            out.append(Draft("command_download", f"Host {_instance_id(e)} fetched a payload from {url}",
                             [e.event_id], [LOOKUP, "describe_instances"], list(e.resources)))
    return out


@rule("reverse_shell")
def _reverse_shell(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, COMMANDS):
        for c in _commands(e):
            m = _DEV_TCP_RE.search(c) or _NC_RE.search(c)
            if m:
                out.append(Draft("reverse_shell",
                                 f"Reverse shell from {_instance_id(e)} called back to {m.group(1)} port {m.group(2)}",
                                 [e.event_id], [LOOKUP, "describe_instances"], list(e.resources)))
                break
    return out


@rule("command_persistence")
def _command_persistence(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("command_persistence", f"Payload on {_instance_id(e)} was made to survive reboots through a scheduled job",
              [e.event_id], [LOOKUP], list(e.resources))
        for e in _ok(ctx.malicious, COMMANDS)
        if any(m in c for c in _commands(e) for m in _PERSIST_MARKERS)
    ]


@rule("userdata_persistence")
def _userdata_persistence(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("userdata_persistence", f"Boot script of {e.request_parameters['instanceId']} was replaced by {short_identity(e)}",
              [e.event_id], [LOOKUP, "describe_instances"], list(e.resources))
        for e in _ok(ctx.malicious, "ModifyInstanceAttribute")
    ]


@rule("session_start")
def _session_start(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("session_start", f"{short_identity(e)} opened an interactive shell session on {e.request_parameters['target']}",
              [e.event_id], [LOOKUP], list(e.resources))
        for e in _ok(ctx.malicious, "StartSession")
    ]


@rule("instance_credential_use")
def _instance_credential_use(ctx: RuleContext) -> list[Draft]:
    groups: dict[tuple[str, str, str], list[CloudEvent]] = OrderedDict()
    for e in ctx.malicious:
        ident = e.user_identity
        if ident.kind is not IdentityKind.ASSUMED_ROLE or not ident.arn or e.source_ip.startswith("10."):
            continue
        session = ident.arn.rsplit("/", 1)[-1]
        if session.startswith("i-"):
            groups.setdefault((short_identity(e), session, e.source_ip), []).append(e)
    return [
        Draft("instance_credential_use",
              f"Credentials of {role} taken from {session} were replayed from {ip}",
              [e.event_id for e in evs], [LOOKUP, "describe_instances"])
        for (role, session, ip), evs in groups.items()
    ]


@rule("crypto_launch")
def _crypto_launch(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.malicious, "RunInstances"):
        n = len(e.response_elements["instancesSet"]["items"])
        out.append(Draft("crypto_launch",
                         f"{short_identity(e)} launched {n} {e.request_parameters['instanceType']} hosts, inflating compute spend",
                         [e.event_id], [LOOKUP, "describe_instances", "get_cost_and_usage"], list(e.resources)))
    return out


@rule("instance_disruption")
def _instance_disruption(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("instance_disruption", f"{short_identity(e)} ran {e.event_name} against {e.request_parameters['instanceId']}",
              [e.event_id], [LOOKUP, "describe_instances"], list(e.resources))
        for e in _ok(ctx.malicious, {"StopInstances", "TerminateInstances"})
    ]


# --- benign explanations (false-positive cases only) -----------------------------------


@rule("benign_mfa_login")
def _benign_mfa_login(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("benign_mfa_login",
              f"Final sign-in by {e.request_parameters['userName']} used MFA from {_where(e.source_ip)}",
              [e.event_id], [LOOKUP])
        for e in _ok(ctx.benign, "ConsoleLogin") if e.response_elements.get("MFAUsed") == "Yes"
    ]


@rule("benign_password_reset")
def _benign_password_reset(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("benign_password_reset",
              f"Helpdesk identity {short_identity(e)} reset the password of {e.request_parameters['userName']} beforehand",
              [e.event_id], [LOOKUP, "get_user"], list(e.resources))
        for e in _ok(ctx.benign, "UpdateLoginProfile")
    ]


@rule("benign_change_ticket")
def _benign_change_ticket(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.benign, "PutBucketTagging"):
        tags = {t["Key"]: t["Value"] for t in e.request_parameters["Tagging"]["TagSet"]}
        if "change-ticket" in tags:
            out.append(Draft("benign_change_ticket",
                             f"{e.request_parameters['bucketName']} carries approved change ticket {tags['change-ticket']}",
                             [e.event_id], [LOOKUP, "list_buckets"], list(e.resources)))
    return out


@rule("benign_admin_change")
def _benign_admin_change(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _ok(ctx.benign, {"PutBucketPolicy", "PutBucketAcl", "AuthorizeSecurityGroupIngress"}):
        tool = "describe_security_groups" if e.event_name == "AuthorizeSecurityGroupIngress" else "get_bucket_policy"
        out.append(Draft("benign_admin_change",
                         f"Change was made by administrator {short_identity(e)} from {_where(e.source_ip)}",
                         [e.event_id], [LOOKUP, tool], list(e.resources)))
    return out


@rule("benign_static_content")
def _benign_static_content(ctx: RuleContext) -> list[Draft]:
    groups: dict[str, list[CloudEvent]] = OrderedDict()
    for e in _ok(ctx.benign, OBJECT_READS):
        if e.user_identity.kind is IdentityKind.ANONYMOUS:
            groups.setdefault(e.request_parameters["bucketName"], []).append(e)
    return [
        Draft("benign_static_content", f"Anonymous reads of {bucket} only fetched published website assets",
              [e.event_id for e in evs], [LOOKUP, "list_objects"])
        for bucket, evs in groups.items()
    ]


@rule("benign_partner_trust")
def _benign_partner_trust(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _assumptions(ctx.benign):
        role_arn = e.request_parameters["roleArn"]
        acct = e.user_identity.account_id or ""
        if acct and acct != _account_of(role_arn):
            out.append(Draft("benign_partner_trust",
                             f"Trust policy of {_tail(role_arn)} names partner principal {_tail(e.user_identity.arn or '')} of account {acct}",
                             [e.event_id], ["get_role", LOOKUP], [role_arn]))
    return out


@rule("benign_external_id")
def _benign_external_id(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("benign_external_id", f"Partner session presented the agreed external id {e.request_parameters['externalId']}",
              [e.event_id], [LOOKUP])
        for e in _assumptions(ctx.benign) if "externalId" in e.request_parameters
    ]


@rule("benign_partner_scope")
def _benign_partner_scope(ctx: RuleContext) -> list[Draft]:
    partner_roles = {
        e.request_parameters["roleArn"] for e in _assumptions(ctx.benign)
        if e.user_identity.account_id and e.user_identity.account_id != _account_of(e.request_parameters["roleArn"])
    }
    reads = [
        e for e in ctx.benign
        if e.event_name in OBJECT_READS | OBJECT_LISTS and e.user_identity.issuer_arn in partner_roles
    ]
    buckets = {e.request_parameters.get("bucketName") for e in reads}
    if not reads or len(buckets) != 1:
        return []
    return [Draft("benign_partner_scope", f"Partner sessions touched nothing beyond the shared exchange bucket {buckets.pop()}",
                  [e.event_id for e in reads], [LOOKUP, "list_buckets"])]


@rule("benign_pipeline_assume")
def _benign_pipeline_assume(ctx: RuleContext) -> list[Draft]:
    out = []
    for e in _assumptions(ctx.benign):
        role_arn = e.request_parameters["roleArn"]
        if e.user_identity.kind is IdentityKind.IAM_USER and e.user_identity.account_id == _account_of(role_arn):
            out.append(Draft("benign_pipeline_assume",
                             f"Build user {short_identity(e)} took on deployment role {_tail(role_arn)} from CI runner {e.source_ip}",
                             [e.event_id], [LOOKUP, "get_role"], [role_arn]))
    return out


@rule("benign_pipeline_command")
def _benign_pipeline_command(ctx: RuleContext) -> list[Draft]:
    return [
        Draft("benign_pipeline_command",
              f"Command on {_instance_id(e)} was issued by {short_identity(e)} under change note {e.request_parameters['comment']}",
              [e.event_id], [LOOKUP, "describe_instances"], list(e.resources))
        for e in _ok(ctx.benign, COMMANDS) if e.request_parameters.get("comment")
    ]


@rule("benign_artifact_source")
def _benign_artifact_source(ctx: RuleContext) -> list[Draft]:
    uploads = {f"s3://{e.request_parameters['bucketName']}/{e.request_parameters['key']}": e for e in _ok(ctx.benign, "PutObject")}
    out = []
    for e in _ok(ctx.benign, COMMANDS):
        for url in dict.fromkeys(u for c in _commands(e) for u in _URL_RE.findall(c)):
            put = uploads.get(url)
            if put is not None:
                out.append(Draft("benign_artifact_source",
                                 f"Script {put.request_parameters['key']} was published to internal bucket "
                                 f"{put.request_parameters['bucketName']} by {short_identity(put)} before it ran",
                                 [put.event_id, e.event_id], [LOOKUP, "list_objects"], list(put.resources)))
    return out


# --- rulebook -------------------------------------------------------------------------

_SHARED_TAIL = (
    "iam_recon", "ec2_recon", "user_created", "key_created", "persistence", "backdoor_key_use",
    "privilege_escalation", "broad_policy", "login_profile_backdoor", "trust_backdoor",
    "logging_disabled", "bucket_enumeration", "object_access", "data_write", "object_deleted",
    "failed_access",
)

RULEBOOK: dict[Category, tuple[str, ...]] = {
    Category.BRUTE_FORCE: (
        "alert_restatement", "login_success", "stuffing_other_users", *_SHARED_TAIL,
        "benign_password_reset", "benign_mfa_login",
    ),
    Category.UNAUTHORIZED_ACCESS: (
        "alert_restatement", "role_hop", "role_chain", "cross_account_trust", *_SHARED_TAIL,
        "instance_credential_use",
        "benign_partner_trust", "benign_external_id", "benign_partner_scope", "benign_pipeline_assume",
    ),
    Category.MISCONFIGURATION: (
        "alert_restatement", "exposure_actor", "cross_account_grant", "sg_opened", *_SHARED_TAIL,
        "benign_change_ticket", "benign_admin_change", "benign_static_content", "benign_pipeline_assume",
    ),
    Category.MALICIOUS_FILE_EXECUTION: (
        "alert_restatement", "command_download", "reverse_shell", "command_persistence",
        "userdata_persistence", "session_start", "instance_credential_use", "crypto_launch",
        "instance_disruption", "sg_opened", *_SHARED_TAIL,
        "benign_pipeline_assume", "benign_pipeline_command", "benign_artifact_source",
    ),
}


def apply_rulebook(
    category: Category,
    verdict: Verdict,
    events: Sequence[tuple[TraceEntry, CloudEvent]],
    log: EventLog,
    alert: Alert,
    *,
    exfil_reads: int,
) -> list[Finding]:
    scenario = [(entry, e) for entry, e in events if not entry.background]
    by_id = {e.event_id: e for _, e in events}
    trigger = [by_id.get(eid) or log.get(eid) for eid in alert.triggering_event_ids]
    ctx = RuleContext(
        category=category,
        verdict=verdict,
        malicious=[e for entry, e in scenario if entry.intent is Intent.MALICIOUS],
        benign=[e for entry, e in scenario if entry.intent is Intent.BENIGN],
        alert=alert,
        trigger=[e for e in trigger if e is not None],
        log=log,
        exfil_reads=exfil_reads,
    )
    drafts: "OrderedDict[str, Draft]" = OrderedDict()
    for name in RULEBOOK[category]:
        if name.startswith("benign_") and verdict is Verdict.TP:
            continue
        for d in RULES[name](ctx):
            if d.statement in drafts:
                prev = drafts[d.statement]
                prev.event_ids.extend(x for x in d.event_ids if x not in prev.event_ids)
            else:
                drafts[d.statement] = d
    findings = []
    for n, d in enumerate(drafts.values(), start=1):
        evidence = [EvidenceArtifact(EvidenceKind.EVENT_ID, x) for x in dict.fromkeys(d.event_ids)]
        evidence += [EvidenceArtifact(EvidenceKind.ARN, a) for a in dict.fromkeys(d.arns) if a]
        findings.append(Finding(f"F{n:02d}", d.rule, d.statement, evidence, list(dict.fromkeys(d.tools))))
    return findings
