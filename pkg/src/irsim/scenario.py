"""Scenario execution: replay attack and benign steps against a provisioned
environment, instantiate the alert, and extract ground truth.

A :class:`CaseBundle` on disk is a directory holding ``case.json`` (manifest +
final environment snapshot), ``events.jsonl``, ``alert.json`` and
``ground_truth.json``.  Everything is derived from ``(spec, seed)`` so the
same inputs always produce byte-identical files.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import names
from .cloud import (
    ActionError,
    Actor,
    ActorKind,
    ControlAction,
    Environment,
    EnvironmentSpec,
    PrincipalKind,
    ResourceNotFound,
    apply_control_action,
    provision_environment,
)
from .core import (
    MS_PER_HOUR,
    MS_PER_MINUTE,
    Category,
    IrsimError,
    SpecError,
    Verdict,
    derive_seed,
    format_ts,
    parse_ts,
    structure,
    unstructure,
)
from .evaluator.rouge import text_similarity
from .telemetry import CloudEvent, EventLog, parse_log, serialize_log

BUNDLE_FILES = ("case.json", "events.jsonl", "alert.json", "ground_truth.json")
SCHEMA_VERSION = 1

# Novelty: a finding this similar (ROUGE-L F1) to the alert text counts as alert-derived.
DEFAULT_TAU_ALERT = 0.6
# Exfiltration composite: reads from one bucket to one source address.
DEFAULT_EXFIL_READS = 10


class Intent(str, enum.Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"


@dataclass
class AttackStep:
    step_id: str
    actor: Actor
    action: ControlAction
    offset: int  # ms after scenario start
    depends_on: list[str] = field(default_factory=list)
    intent: Intent = Intent.MALICIOUS


@dataclass
class ScenarioSpec:
    scenario_id: str
    category: Category
    env_spec: EnvironmentSpec
    steps: list[AttackStep]
    alert_template: str
    alert_trigger: list[str]  # step ids whose events fire the alert
    intended_verdict: Verdict
    start_time: str = "2025-03-03T09:00:00.000Z"
    lineage: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        return structure(cls, data)

    def step(self, step_id: str) -> AttackStep:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)


class EvidenceKind(str, enum.Enum):
    EVENT_ID = "event_id"
    ARN = "arn"
    TIMESTAMP = "timestamp"


@dataclass(frozen=True)
class EvidenceArtifact:
    kind: EvidenceKind
    value: str


@dataclass
class Alert:
    alert_id: str
    description: str
    triggering_event_ids: list[str]
    category: Category
    fired_at: str

    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Alert":
        return structure(cls, data)


@dataclass
class Finding:
    finding_id: str
    rule: str  # rulebook entry that produced the statement
    statement: str
    evidence: list[EvidenceArtifact]
    required_tools: list[str]
    novel: bool = False


@dataclass
class TraceEntry:
    step_id: str
    event_id: str
    intent: Intent
    background: bool = False


@dataclass
class GroundTruth:
    verdict: Verdict
    findings: list[Finding]
    novel_findings: list[str]  # finding ids, a subset of ``findings``
    trace: list[TraceEntry] = field(default_factory=list)

    def novel(self) -> list[Finding]:
        ids = set(self.novel_findings)
        return [f for f in self.findings if f.finding_id in ids]

    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return structure(cls, data)


@dataclass
class CaseManifest:
    case_id: str
    category: Category
    scenario_id: str
    seed: int
    lineage: list[str] = field(default_factory=list)
    compression: str = "1"
    schema_version: int = SCHEMA_VERSION


@dataclass
class CaseBundle:
    manifest: CaseManifest
    environment: Environment
    log: EventLog
    alert: Alert
    ground_truth: GroundTruth

    @property
    def case_id(self) -> str:
        return self.manifest.case_id

    def files(self) -> dict[str, str]:
        case = {"manifest": unstructure(self.manifest), "environment": self.environment.to_dict()}
        return {
            "case.json": _dump(case),
            "events.jsonl": serialize_log(self.log),
            "alert.json": _dump(self.alert.to_dict()),
            "ground_truth.json": _dump(self.ground_truth.to_dict()),
        }

    def write(self, directory: str | Path) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for name, text in self.files().items():
            (path / name).write_text(text, encoding="utf-8")
        return path

    @classmethod
    def from_files(cls, files: dict[str, str]) -> "CaseBundle":
        case = json.loads(files["case.json"])
        return cls(
            manifest=structure(CaseManifest, case["manifest"]),
            environment=Environment.from_dict(case["environment"]),
            log=parse_log(files["events.jsonl"]),
            alert=Alert.from_dict(json.loads(files["alert.json"])),
            ground_truth=GroundTruth.from_dict(json.loads(files["ground_truth.json"])),
        )

    @classmethod
    def read(cls, directory: str | Path, with_ground_truth: bool = True) -> "CaseBundle":
        path = Path(directory)
        files = {n: (path / n).read_text(encoding="utf-8") for n in BUNDLE_FILES if with_ground_truth or n != "ground_truth.json"}
        if not with_ground_truth:
            files["ground_truth.json"] = json.dumps({"verdict": "FP", "findings": [], "novel_findings": []})
        return cls.from_files(files)


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


class ScenarioExecutionError(IrsimError):
    def __init__(self, step_id: str, reason: str):
        super().__init__(f"step {step_id!r}: {reason}")
        self.step_id = step_id


class GroundTruthError(IrsimError):
    pass


# --- structure checks -------------------------------------------------------------


def check_structure(spec: ScenarioSpec) -> None:
    """Raise :class:`SpecError` when step ids, dependencies or the alert trigger are inconsistent."""
    try:
        Category(spec.category)
    except ValueError:
        raise SpecError(f"unknown category {spec.category!r}", "category") from None
    if not spec.steps:
        raise SpecError("scenario has no steps", "steps")
    ids = [s.step_id for s in spec.steps]
    if len(set(ids)) != len(ids):
        raise SpecError("duplicate step ids", "steps")
    known = set(ids)
    for s in spec.steps:
        if s.offset < 0:
            raise SpecError("negative offset", f"steps[{s.step_id}].offset")
        for d in s.depends_on:
            if d not in known:
                raise SpecError(f"depends on unknown step {d!r}", f"steps[{s.step_id}].depends_on")
    execution_order(spec.steps)
    if not spec.alert_trigger:
        raise SpecError("alert has no triggering steps", "alert_trigger")
    for t in spec.alert_trigger:
        if t not in known:
            raise SpecError(f"unknown step {t!r}", "alert_trigger")


def execution_order(steps: Sequence[AttackStep]) -> list[int]:
    """Indices of ``steps`` in execution order: a topological order preferring (offset, declaration)."""
    index = {s.step_id: i for i, s in enumerate(steps)}
    indegree = [0] * len(steps)
    children: list[list[int]] = [[] for _ in steps]
    for i, s in enumerate(steps):
        for d in dict.fromkeys(s.depends_on):
            if d not in index:
                raise SpecError(f"depends on unknown step {d!r}", f"steps[{s.step_id}].depends_on")
            indegree[i] += 1
            children[index[d]].append(i)
    heap = [(s.offset, i) for i, s in enumerate(steps) if indegree[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, i = heapq.heappop(heap)
        order.append(i)
        for c in children[i]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(heap, (steps[c].offset, c))
    if len(order) != len(steps):
        stuck = sorted(steps[i].step_id for i in range(len(steps)) if indegree[i] > 0)
        raise SpecError(f"dependency cycle among {stuck}", "steps")
    return order


def _as_fraction(factor: Any) -> Fraction:
    if isinstance(factor, (int, Fraction)):
        return Fraction(factor)
    return Fraction(str(factor))


def compress_timeline(steps: Sequence[AttackStep], factor: Any) -> list[AttackStep]:
    """Scale offsets by ``factor`` and nudge them just enough to keep causality.

    After scaling, each step is placed no earlier than the step executed before
    it (one millisecond later where the declaration-order tie-break would
    otherwise flip them) and strictly after every step it depends on.  The
    execution order is therefore unchanged, and every dependency edge keeps a
    strictly increasing timestamp.
    """
    f = _as_fraction(factor)
    if f <= 0:
        raise ValueError("compression factor must be positive")
    order = execution_order(steps)
    index = {s.step_id: i for i, s in enumerate(steps)}
    times: dict[int, int] = {}
    prev: int | None = None
    for i in order:
        s = steps[i]
        t = math.floor(s.offset * f)
        if prev is not None:
            t = max(t, times[prev] + (1 if i < prev else 0))
        for d in s.depends_on:
            t = max(t, times[index[d]] + 1)
        times[i] = t
        prev = i
    return [replace(s, offset=times[i]) for i, s in enumerate(steps)]


# --- alerts ---------------------------------------------------------------------

ALERT_TEMPLATES: dict[Category, str] = {
    Category.BRUTE_FORCE: (
        "Detection: {count} failed console sign-in attempts against IAM user {user} "
        "from {ip} within {window} minutes."
    ),
    Category.UNAUTHORIZED_ACCESS: (
        "Detection: role {role} in account {account} was assumed by {principal} "
        "from unrecognized address {ip}."
    ),
    Category.MISCONFIGURATION: (
        "Detection: S3 bucket {bucket} in account {account} was made publicly readable "
        "through a policy or ACL change."
    ),
    Category.MALICIOUS_FILE_EXECUTION: (
        "Detection: a Systems Manager shell command was executed on EC2 instance "
        "{instance} in account {account}."
    ),
}


def short_identity(e: CloudEvent) -> str:
    """Human-facing name of the caller: user name, role name, or ``anonymous``."""
    ident = e.user_identity
    if ident.arn is None:
        return "anonymous" if ident.kind.value == "anonymous" else "service"
    resource = ident.arn.rsplit(":", 1)[-1]
    parts = resource.split("/")
    return parts[1] if len(parts) > 1 else parts[0]


def alert_slots(category: Category, events: Sequence[CloudEvent]) -> dict[str, Any]:
    first, last = events[0], events[-1]
    slots: dict[str, Any] = {"ip": last.source_ip, "account": first.user_identity.account_id or ""}
    if category is Category.BRUTE_FORCE:
        slots["count"] = len(events)
        slots["user"] = first.request_parameters.get("userName", short_identity(first))
        slots["window"] = max(1, math.ceil((last.event_time - first.event_time) / MS_PER_MINUTE))
    elif category is Category.UNAUTHORIZED_ACCESS:
        role_arn = first.request_parameters.get("roleArn", "")
        slots["role"] = role_arn.rsplit("/", 1)[-1]
        slots["account"] = role_arn.split(":")[4] if role_arn.count(":") >= 5 else slots["account"]
        slots["principal"] = short_identity(first)
        slots["ip"] = first.source_ip
    elif category is Category.MISCONFIGURATION:
        slots["bucket"] = first.request_parameters.get("bucketName", "")
        slots["account"] = _resource_account(first)
    else:
        slots["instance"] = first.request_parameters.get("instanceIds", [first.request_parameters.get("instanceId", "")])[0]
        slots["account"] = _resource_account(first)
    return slots


def _resource_account(e: CloudEvent) -> str:
    for r in e.resources:
        parts = r.split(":")
        if len(parts) >= 6 and parts[4]:
            return parts[4]
    return e.user_identity.account_id or ""


def build_alert(spec: ScenarioSpec, case_id: str, events: Sequence[CloudEvent]) -> Alert:
    if not events:
        raise GroundTruthError("alert has no triggering events")
    slots = alert_slots(Category(spec.category), events)
    try:
        description = spec.alert_template.format_map(slots)
    except KeyError as exc:
        raise SpecError(f"alert template slot {exc} is not available", "alert_template") from None
    return Alert(
        alert_id=f"alert-{case_id}",
        description=description,
        triggering_event_ids=[e.event_id for e in events],
        category=Category(spec.category),
        fired_at=format_ts(events[-1].event_time + MS_PER_MINUTE),
    )


# --- novelty --------------------------------------------------------------------


def classify_novel(f: Finding, alert: Alert, tau_alert: float = DEFAULT_TAU_ALERT) -> bool:
    """Novel = not restating the alert, backed by evidence, and requiring a tool to find."""
    not_in_alert = text_similarity(f.statement, alert.description) < tau_alert
    return not_in_alert and bool(f.evidence) and bool(f.required_tools)


# --- background activity ----------------------------------------------------------

_BACKGROUND_ACTIONS = [
    ("DescribeInstances", "ec2:DescribeInstances"),
    ("DescribeSecurityGroups", "ec2:DescribeSecurityGroups"),
    ("ListBuckets", "s3:ListAllMyBuckets"),
    ("GetCallerIdentity", None),
    ("ListObjectsV2", "s3:ListBucket"),
    ("GetObject", "s3:GetObject"),
    ("GetObject", "s3:GetObject"),
]


def _background_steps(env: Environment, declared: set[str], span: int, rng: random.Random) -> list[AttackStep]:
    """Routine read-only traffic by undeclared principals, so the log is not attack-only."""
    primary = env.primary
    actors: list[Actor] = []
    ips = [names.corporate_ip(rng) for _ in range(3)]
    for p in primary.users():
        if p.name not in declared and p.newest_active_key() is not None:
            actors.append(Actor(ActorKind.USER, p.name, "primary", rng.choice(ips)))
    for inst in primary.instances.values():
        if inst.profile is not None and inst.name not in declared:
            role = env.principal(str(inst.profile))
            if role is not None and role.name not in declared:
                actors.append(Actor(ActorKind.ROLE, role.name, "primary", names.corporate_ip(rng), inst.instance_id))
    if not actors:
        return []
    buckets = [b for b in primary.buckets.values() if b.name not in declared and b.objects]
    steps = []
    for n in range(rng.randrange(12, 36)):
        actor = rng.choice(actors)
        principal = env.find_principal(PrincipalKind(actor.kind.value), actor.name or "", "primary")
        name, iam_action = rng.choice(_BACKGROUND_ACTIONS)
        params: dict[str, Any] = {}
        if name in ("ListObjectsV2", "GetObject"):
            if not buckets:
                continue
            b = rng.choice(buckets)
            params["bucket"] = b.name
            if name == "GetObject":
                params["key"] = rng.choice(b.objects).key
            resource = str(b.arn)
        else:
            resource = "*"
        if iam_action is not None and not principal.allows(iam_action, resource):
            continue
        offset = rng.randrange(0, span + 4 * MS_PER_HOUR)
        steps.append(AttackStep(f"bg-{n:03d}", actor, ControlAction(name, params), offset, [], Intent.BENIGN))
    return steps


def declared_names(env_spec: EnvironmentSpec) -> set[str]:
    out: set[str] = set()
    for group in ("users", "roles", "buckets", "security_groups", "instances"):
        out.update(d.name for d in getattr(env_spec, group))
    return out


# --- execution --------------------------------------------------------------------


def execute_scenario(
    spec: ScenarioSpec,
    seed: int,
    *,
    case_id: str | None = None,
    compression: Any = 1,
    background: bool = True,
    exfil_reads: int = DEFAULT_EXFIL_READS,
    tau_alert: float = DEFAULT_TAU_ALERT,
) -> CaseBundle:
    """Provision, replay and label one case.  Deterministic in ``(spec, seed)`` and the options."""
    check_structure(spec)
    case_id = case_id or spec.scenario_id
    env = provision_environment(spec.env_spec, derive_seed(seed, "environment"))
    start = parse_ts(spec.start_time)
    lead_in = 2 * MS_PER_HOUR
    if start - lead_in < env.clock:
        raise SpecError("scenario start precedes environment provisioning", "start_time")

    timed = compress_timeline(spec.steps, compression)
    span = max(s.offset for s in timed)
    plan: list[tuple[int, int, int, AttackStep, bool]] = []
    for i, s in enumerate(timed):
        plan.append((start + s.offset, 0, i, s, False))
    if background:
        rng = random.Random(derive_seed(seed, "background"))
        for j, s in enumerate(_background_steps(env, declared_names(spec.env_spec), span, rng)):
            plan.append((start - lead_in + s.offset, 1, j, s, True))
    plan.sort(key=lambda p: (p[0], p[1], p[2]))

    log = EventLog()
    trace: list[TraceEntry] = []
    events_by_step: dict[str, CloudEvent] = {}
    for at, _, _, step, is_bg in plan:
        try:
            env, event = apply_control_action(env, step.action, step.actor, at)
        except (ActionError, ResourceNotFound, SpecError) as exc:
            if is_bg:
                continue
            raise ScenarioExecutionError(step.step_id, str(exc)) from None
        log.append(event)
        trace.append(TraceEntry(step.step_id, event.event_id, Intent(step.intent), is_bg))
        if not is_bg:
            events_by_step[step.step_id] = event

    alert = build_alert(spec, case_id, [events_by_step[t] for t in spec.alert_trigger])
    gt = extract_ground_truth(trace, log, alert, exfil_reads=exfil_reads, tau_alert=tau_alert)
    manifest = CaseManifest(
        case_id=case_id,
        category=Category(spec.category),
        scenario_id=spec.scenario_id,
        seed=seed,
        lineage=list(spec.lineage),
        compression=str(_as_fraction(compression)),
    )
    return CaseBundle(manifest, env, log, alert, gt)


def extract_ground_truth(
    trace: Sequence[TraceEntry],
    log: EventLog,
    alert: Alert,
    *,
    exfil_reads: int = DEFAULT_EXFIL_READS,
    tau_alert: float = DEFAULT_TAU_ALERT,
) -> GroundTruth:
    """Correlate the executed trace with the log and apply the finding rulebook."""
    from .rules import apply_rulebook

    events = []
    for entry in trace:
        e = log.get(entry.event_id)
        if e is None:
            raise GroundTruthError(f"trace step {entry.step_id!r} references event {entry.event_id} absent from the log")
        events.append((entry, e))
    for eid in alert.triggering_event_ids:
        if eid not in log:
            raise GroundTruthError(f"alert references event {eid} absent from the log")
    malicious = any(entry.intent is Intent.MALICIOUS and not entry.background for entry, _ in events)
    verdict = Verdict.TP if malicious else Verdict.FP
    findings = apply_rulebook(Category(alert.category), verdict, events, log, alert, exfil_reads=exfil_reads)
    for f in findings:
        f.novel = classify_novel(f, alert, tau_alert)
    return GroundTruth(
        verdict=verdict,
        findings=findings,
        novel_findings=[f.finding_id for f in findings if f.novel],
        trace=list(trace),
    )


def read_corpus(directory: str | Path, with_ground_truth: bool = True) -> Iterable[CaseBundle]:
    root = Path(directory)
    cases = root / "cases" if (root / "cases").is_dir() else root
    for path in sorted(p for p in cases.iterdir() if p.is_dir()):
        yield CaseBundle.read(path, with_ground_truth)
