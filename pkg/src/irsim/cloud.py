"""In-memory multi-account cloud environment.

``provision_environment`` builds an :class:`Environment` from an
:class:`EnvironmentSpec`; ``apply_control_action`` is the single state
transition, and every call to it emits exactly one :class:`CloudEvent`.

Authorization is a deliberately small allow-list model: an attached policy
statement (or, for ``AssumeRole``, a trust edge) that matches the IAM action
and resource ARN allows the call; anything else is denied.  Denials are not
exceptions; they produce an event carrying an ``error_code`` and leave the
environment untouched apart from the clock.
"""

from __future__ import annotations

import enum
import fnmatch
import hashlib
import random
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Union

from . import names
from .core import MS_PER_DAY, Category, IrsimError, SpecError, parse_ts, structure, unstructure
from .telemetry import CloudEvent, IdentityKind, UserIdentity

# --- ARNs -------------------------------------------------------------------

_ACCOUNT_RE = re.compile(r"^[0-9]{12}$")
_TOKEN_RE = re.compile(r"^[^\s:]+$")


class ArnError(IrsimError, ValueError):
    pass


@dataclass(frozen=True)
class Arn:
    partition: str
    service: str
    region: str
    account_id: str
    resource_path: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("partition", "service"):
            if not _TOKEN_RE.match(getattr(self, name)):
                raise ArnError(f"invalid {name} {getattr(self, name)!r}")
        if self.region and not _TOKEN_RE.match(self.region):
            raise ArnError(f"invalid region {self.region!r}")
        if not _ACCOUNT_RE.match(self.account_id):
            raise ArnError(f"account id must be exactly 12 digits, got {self.account_id!r}")
        if not self.resource_path or any(not t or "/" in t or t.strip() != t for t in self.resource_path):
            raise ArnError(f"invalid resource path {self.resource_path!r}")

    def __str__(self) -> str:
        return f"arn:{self.partition}:{self.service}:{self.region}:{self.account_id}:{'/'.join(self.resource_path)}"

    @classmethod
    def parse(cls, text: str) -> "Arn":
        if not isinstance(text, str):
            raise ArnError(f"ARN must be a string, got {type(text).__name__}")
        parts = text.split(":", 5)
        if len(parts) != 6 or parts[0] != "arn":
            raise ArnError(f"malformed ARN {text!r}")
        return cls(parts[1], parts[2], parts[3], parts[4], tuple(parts[5].split("/")))

    def to_json_value(self) -> str:
        return str(self)

    @classmethod
    def from_json_value(cls, value: str) -> "Arn":
        return cls.parse(value)


def iam_arn(account_id: str, kind: str, name: str) -> Arn:
    return Arn("aws", "iam", "", account_id, (kind, name))


def bucket_arn(account_id: str, bucket: str) -> Arn:
    return Arn("aws", "s3", "", account_id, (bucket,))


def instance_arn(region: str, account_id: str, instance_id: str) -> Arn:
    return Arn("aws", "ec2", region, account_id, ("instance", instance_id))


def security_group_arn(region: str, account_id: str, group_id: str) -> Arn:
    return Arn("aws", "ec2", region, account_id, ("security-group", group_id))


def trail_arn(region: str, account_id: str, name: str) -> Arn:
    return Arn("aws", "cloudtrail", region, account_id, ("trail", name))


# --- policies -----------------------------------------------------------------


@dataclass
class Statement:
    actions: list[str]
    resources: list[str] = field(default_factory=lambda: ["*"])
    principals: list[str] = field(default_factory=list)  # resource policies only: "*", account ids, ARNs

    def matches(self, action: str, resource: str) -> bool:
        return any(fnmatch.fnmatchcase(action, a) for a in self.actions) and any(
            fnmatch.fnmatchcase(resource, r) for r in self.resources
        )


@dataclass
class PolicyDoc:
    name: str
    statements: list[Statement] = field(default_factory=list)

    def allows(self, action: str, resource: str) -> bool:
        return any(s.matches(action, resource) for s in self.statements)

    def grants(self, principal: str, action: str, resource: str) -> bool:
        """Resource-policy check: does a statement name ``principal`` for this action?"""
        return any(
            s.matches(action, resource) and any(p == "*" or p == principal for p in s.principals)
            for s in self.statements
        )


MANAGED_POLICIES: dict[str, list[Statement]] = {
    "AdministratorAccess": [Statement(["*"])],
    "PowerUserAccess": [Statement(["s3:*", "ec2:*", "ssm:*", "sts:*", "cloudtrail:Describe*", "iam:Get*", "iam:List*"])],
    "ReadOnlyAccess": [Statement(["*:Get*", "*:List*", "*:Describe*", "s3:SelectObjectContent"])],
    "IAMFullAccess": [Statement(["iam:*"])],
    "AmazonS3FullAccess": [Statement(["s3:*"])],
    "AmazonS3ReadOnlyAccess": [Statement(["s3:Get*", "s3:List*", "s3:SelectObjectContent"])],
    "AmazonEC2FullAccess": [Statement(["ec2:*"])],
    "AmazonSSMFullAccess": [Statement(["ssm:*", "ec2:Describe*"])],
    "AmazonSSMManagedInstanceCore": [Statement(["ssm:UpdateInstanceInformation", "ssm:GetParameter", "s3:GetObject"])],
    "IAMUserChangePassword": [Statement(["iam:ChangePassword", "iam:GetUser"])],
    "IAMSelfManageServiceSpecificCredentials": [Statement(["iam:CreateAccessKey", "iam:ListAccessKeys"])],
    "HelpdeskPasswordReset": [Statement(["iam:UpdateLoginProfile", "iam:GetUser", "iam:ListUsers"])],
    "CloudTrailFullAccess": [Statement(["cloudtrail:*"])],
}

ADMIN_POLICIES = frozenset({"AdministratorAccess", "IAMFullAccess"})


def managed_policy(name: str) -> PolicyDoc:
    if name not in MANAGED_POLICIES:
        raise SpecError(f"unknown managed policy {name!r}", "policies")
    return PolicyDoc(name, [Statement(list(s.actions), list(s.resources), list(s.principals)) for s in MANAGED_POLICIES[name]])


# --- resources --------------------------------------------------------------


class PrincipalKind(str, enum.Enum):
    USER = "user"
    ROLE = "role"


class InstanceState(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    STOPPED = "stopped"
    TERMINATED = "terminated"


_TRANSITIONS = {
    InstanceState.PENDING: {InstanceState.RUNNING, InstanceState.TERMINATED},
    InstanceState.RUNNING: {InstanceState.STOPPED, InstanceState.TERMINATED},
    InstanceState.STOPPED: {InstanceState.RUNNING, InstanceState.TERMINATED},
    InstanceState.TERMINATED: set(),
}


@dataclass
class AccessKey:
    key_id: str
    created: int
    status: str = "Active"


@dataclass
class IamPrincipal:
    arn: Arn
    kind: PrincipalKind
    attached_policies: list[PolicyDoc] = field(default_factory=list)
    access_keys: list[AccessKey] = field(default_factory=list)
    trust_policy: PolicyDoc | None = None  # roles only; mirrors the environment's trust edges
    created: int = 0
    password_digest: str | None = None  # users with a console login profile
    mfa: bool = False
    tags: dict[str, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.arn.resource_path[-1]

    def allows(self, action: str, resource: str) -> bool:
        return any(p.allows(action, resource) for p in self.attached_policies)

    def newest_active_key(self) -> AccessKey | None:
        active = [k for k in self.access_keys if k.status == "Active"]
        return active[-1] if active else None


@dataclass
class S3Object:
    key: str
    size: int
    last_modified: int


@dataclass
class S3Bucket:
    name: str
    arn: Arn
    policy: PolicyDoc
    public: bool = False
    objects: list[S3Object] = field(default_factory=list)
    tags: dict[str, str] = field(default_factory=dict)
    created: int = 0

    def refresh_public(self) -> None:
        self.public = self.policy.grants("*", "s3:GetObject", str(self.arn))

    def find(self, key: str) -> S3Object | None:
        return next((o for o in self.objects if o.key == key), None)


@dataclass
class IngressRule:
    port: int
    cidr: str
    protocol: str = "tcp"


@dataclass
class SecurityGroup:
    group_id: str
    name: str
    arn: Arn
    ingress: list[IngressRule] = field(default_factory=list)


@dataclass
class Ec2Instance:
    instance_id: str
    name: str
    arn: Arn
    region: str
    profile: Arn | None = None  # role ARN
    security_groups: list[str] = field(default_factory=list)  # group ids
    state: InstanceState = InstanceState.RUNNING
    instance_type: str = "t3.medium"
    image_id: str = "ami-0abcdef1234567890"
    launch_time: int = 0
    ssm_managed: bool = False
    user_data: str = ""


@dataclass
class Trail:
    name: str
    arn: Arn
    logging: bool = True


@dataclass
class Account:
    account_id: str
    alias: str
    external: bool = False  # owned by a third party; not visible to investigation tools
    principals: dict[str, IamPrincipal] = field(default_factory=dict)  # keyed by ARN string
    buckets: dict[str, S3Bucket] = field(default_factory=dict)
    instances: dict[str, Ec2Instance] = field(default_factory=dict)  # keyed by instance id
    security_groups: dict[str, SecurityGroup] = field(default_factory=dict)  # keyed by group id
    trails: dict[str, Trail] = field(default_factory=dict)

    def users(self) -> list[IamPrincipal]:
        return [p for p in self.principals.values() if p.kind is PrincipalKind.USER]

    def roles(self) -> list[IamPrincipal]:
        return [p for p in self.principals.values() if p.kind is PrincipalKind.ROLE]


@dataclass
class RoleSession:
    session_name: str
    access_key_id: str
    issued_at: int
    source: str  # ARN of the principal that assumed the role, or the instance id


Resource = Union[IamPrincipal, S3Bucket, Ec2Instance, SecurityGroup, Trail]


@dataclass
class Environment:
    seed: int
    category: Category
    region: str
    accounts: dict[str, Account] = field(default_factory=dict)  # keyed by account id
    trust_edges: list[tuple[str, str]] = field(default_factory=list)  # (source principal ARN, target role ARN)
    clock: int = 0
    seq: int = 0  # events emitted so far; breaks timestamp ties
    minted: int = 0  # identifiers minted so far
    sessions: dict[str, list[RoleSession]] = field(default_factory=dict)  # role ARN -> sessions

    # -- identifiers --
    def _material(self, purpose: str) -> bytes:
        self.minted += 1
        return hashlib.sha256(f"{self.seed}:{self.minted}:{purpose}".encode()).digest()

    def mint_key_id(self, prefix: str = "AKIA") -> str:
        alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"
        raw = self._material("key")
        return prefix + "".join(alphabet[b % 32] for b in raw[:16])

    def mint_hex(self, prefix: str, length: int = 17) -> str:
        return prefix + self._material(prefix).hex()[:length]

    def mint_uuid(self) -> str:
        return str(uuid.UUID(bytes=self._material("event")[:16], version=4))

    # -- lookup helpers --
    @property
    def primary(self) -> Account:
        return next(iter(self.accounts.values()))

    def account(self, alias_or_id: str) -> Account:
        for acct in self.accounts.values():
            if acct.alias == alias_or_id or acct.account_id == alias_or_id:
                return acct
        raise ResourceNotFound(f"account {alias_or_id!r}")

    def principal(self, arn: str) -> IamPrincipal | None:
        for acct in self.accounts.values():
            if arn in acct.principals:
                return acct.principals[arn]
        return None

    def find_principal(self, kind: PrincipalKind | str, name: str, account: str = "primary") -> IamPrincipal:
        acct = self.account(account)
        p = acct.principals.get(str(iam_arn(acct.account_id, PrincipalKind(kind).value, name)))
        if p is None:
            raise ResourceNotFound(f"{PrincipalKind(kind).value} {name!r} in account {account!r}")
        return p

    def bucket(self, name: str) -> tuple[Account, S3Bucket]:
        for acct in self.accounts.values():
            if name in acct.buckets:
                return acct, acct.buckets[name]
        raise ResourceNotFound(f"bucket {name!r}")

    def instance(self, name_or_id: str) -> tuple[Account, Ec2Instance]:
        for acct in self.accounts.values():
            for inst in acct.instances.values():
                if name_or_id in (inst.instance_id, inst.name):
                    return acct, inst
        raise ResourceNotFound(f"instance {name_or_id!r}")

    def security_group(self, name_or_id: str) -> tuple[Account, SecurityGroup]:
        for acct in self.accounts.values():
            for sg in acct.security_groups.values():
                if name_or_id in (sg.group_id, sg.name):
                    return acct, sg
        raise ResourceNotFound(f"security group {name_or_id!r}")

    def trail(self, name: str) -> tuple[Account, Trail]:
        for acct in self.accounts.values():
            if name in acct.trails:
                return acct, acct.trails[name]
        raise ResourceNotFound(f"trail {name!r}")

    def all_key_ids(self) -> list[str]:
        ids = [k.key_id for a in self.accounts.values() for p in a.principals.values() for k in p.access_keys]
        ids += [s.access_key_id for ss in self.sessions.values() for s in ss]
        return ids

    def add_trust_edge(self, source: str, target: str) -> None:
        role = self.principal(target)
        if role is None or role.kind is not PrincipalKind.ROLE:
            raise ResourceNotFound(f"trust target {target!r}")
        if self.principal(source) is None:
            raise ResourceNotFound(f"trust source {source!r}")
        if (source, target) not in self.trust_edges:
            self.trust_edges.append((source, target))
            if role.trust_policy is None:
                role.trust_policy = PolicyDoc("AssumeRolePolicy", [Statement(["sts:AssumeRole"], ["*"], [])])
            role.trust_policy.statements[0].principals.append(source)

    def trusts(self, source: str, target: str) -> bool:
        return (source, target) in self.trust_edges

    # -- serialization --
    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        return structure(cls, data)


class ResourceNotFound(IrsimError, LookupError):
    pass


class ActionError(IrsimError, ValueError):
    """A control action is structurally invalid (unknown action, missing parameter, bad actor)."""


def lookup_resource(env: Environment, arn: Arn | str) -> Resource | None:
    """Return the resource an ARN names, or ``None``.  Terminated instances are still found."""
    a = arn if isinstance(arn, Arn) else Arn.parse(arn)
    acct = next((x for x in env.accounts.values() if x.account_id == a.account_id), None)
    if acct is None:
        return None
    path = a.resource_path
    if a.service == "iam" and len(path) == 2 and path[0] in ("user", "role"):
        return acct.principals.get(str(a))
    if a.service == "s3" and len(path) == 1:
        return acct.buckets.get(path[0])
    if a.service == "ec2" and len(path) == 2:
        if path[0] == "instance":
            return acct.instances.get(path[1])
        if path[0] == "security-group":
            return acct.security_groups.get(path[1])
    if a.service == "cloudtrail" and len(path) == 2 and path[0] == "trail":
        return acct.trails.get(path[1])
    return None


# --- environment specs ------------------------------------------------------


@dataclass
class AccountDecl:
    alias: str
    external: bool = False


@dataclass
class PrincipalRef:
    kind: PrincipalKind
    name: str
    account: str = "primary"


@dataclass
class UserDecl:
    name: str
    account: str = "primary"
    policies: list[str] = field(default_factory=list)
    password: str | None = None
    mfa: bool = False
    access_keys: int = 1
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class RoleDecl:
    name: str
    account: str = "primary"
    policies: list[str] = field(default_factory=list)
    trusted: list[PrincipalRef] = field(default_factory=list)
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class ObjectDecl:
    key: str
    size: int


@dataclass
class BucketDecl:
    name: str
    account: str = "primary"
    public: bool = False
    shared_with: list[str] = field(default_factory=list)  # account aliases granted read
    objects: list[ObjectDecl] = field(default_factory=list)
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class SecurityGroupDecl:
    name: str
    account: str = "primary"
    ingress: list[IngressRule] = field(default_factory=list)


@dataclass
class InstanceDecl:
    name: str
    account: str = "primary"
    profile: str | None = None  # role name in the same account
    security_groups: list[str] = field(default_factory=list)
    instance_type: str = "t3.medium"


COUNT_KEYS = ("users", "roles", "buckets", "instances", "security_groups", "trails")

# Background resources provisioned per category on top of anything declared.
DEFAULT_COUNTS: dict[Category, dict[str, int]] = {
    Category.BRUTE_FORCE: {"users": 5, "roles": 1, "buckets": 2, "instances": 0, "security_groups": 0, "trails": 1},
    Category.UNAUTHORIZED_ACCESS: {"users": 3, "roles": 3, "buckets": 3, "instances": 0, "security_groups": 0, "trails": 1},
    Category.MISCONFIGURATION: {"users": 3, "roles": 1, "buckets": 4, "instances": 1, "security_groups": 2, "trails": 1},
    Category.MALICIOUS_FILE_EXECUTION: {"users": 2, "roles": 1, "buckets": 1, "instances": 3, "security_groups": 2, "trails": 1},
}

PROVISION_EPOCH = parse_ts("2024-01-01T00:00:00.000Z")


@dataclass
class EnvironmentSpec:
    category: Category
    region: str = "us-east-1"
    accounts: list[AccountDecl] = field(default_factory=list)
    users: list[UserDecl] = field(default_factory=list)
    roles: list[RoleDecl] = field(default_factory=list)
    buckets: list[BucketDecl] = field(default_factory=list)
    security_groups: list[SecurityGroupDecl] = field(default_factory=list)
    instances: list[InstanceDecl] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def resolved_counts(self) -> dict[str, int]:
        return {**DEFAULT_COUNTS[self.category], **self.counts}


def password_digest(password: str) -> str:
    return hashlib.sha256(("irsim-salt:" + password).encode()).hexdigest()


def _validate_spec(spec: EnvironmentSpec) -> None:
    try:
        Category(spec.category)
    except ValueError:
        raise SpecError(f"unknown category {spec.category!r}", "category") from None
    for key, value in spec.counts.items():
        if key not in COUNT_KEYS:
            raise SpecError(f"unknown resource count {key!r}", f"counts.{key}")
        if not isinstance(value, int) or value < 0:
            raise SpecError(f"count must be a non-negative integer, got {value!r}", f"counts.{key}")
    aliases = ["primary"] + [a.alias for a in spec.accounts if a.alias != "primary"]
    if len(set(aliases)) != len(aliases):
        raise SpecError("duplicate account alias", "accounts")
    for group in ("users", "roles", "buckets", "security_groups", "instances"):
        for i, decl in enumerate(getattr(spec, group)):
            if decl.account not in aliases:
                raise SpecError(f"unknown account alias {decl.account!r}", f"{group}[{i}].account")


def provision_environment(spec: EnvironmentSpec, seed: int) -> Environment:
    """Build the environment described by ``spec``; identical (spec, seed) give identical environments."""
    _validate_spec(spec)
    category = Category(spec.category)
    rng = random.Random(seed)
    counts = spec.resolved_counts()
    env = Environment(seed=seed, category=category, region=spec.region)
    env.clock = PROVISION_EPOCH + rng.randrange(0, 60) * MS_PER_DAY
    now = env.clock

    # accounts
    used_ids: set[str] = set()
    decls = [AccountDecl("primary")] + [a for a in spec.accounts if a.alias != "primary"]
    if category is Category.UNAUTHORIZED_ACCESS and counts["roles"] > 0 and not any(a.alias == "shared-services" for a in decls):
        decls.append(AccountDecl("shared-services"))
    for decl in decls:
        while True:
            acct_id = str(rng.randrange(10**11, 10**12))
            if acct_id not in used_ids:
                used_ids.add(acct_id)
                break
        env.accounts[acct_id] = Account(acct_id, decl.alias, decl.external)

    taken: set[str] = set()
    for group in ("users", "roles", "buckets", "security_groups", "instances"):
        taken.update(d.name for d in getattr(spec, group))

    def add_user(acct: Account, name: str, policies: list[str], password: str | None, mfa: bool, keys: int, tags: dict) -> IamPrincipal:
        arn = iam_arn(acct.account_id, "user", name)
        if str(arn) in acct.principals:
            raise SpecError(f"duplicate user {name!r}", "users")
        p = IamPrincipal(
            arn=arn,
            kind=PrincipalKind.USER,
            attached_policies=[managed_policy(n) for n in policies],
            created=now,
            password_digest=password_digest(password) if password is not None else None,
            mfa=mfa,
            tags=dict(tags),
        )
        for _ in range(keys):
            p.access_keys.append(AccessKey(env.mint_key_id(), now))
        acct.principals[str(arn)] = p
        return p

    def add_role(acct: Account, name: str, policies: list[str], tags: dict) -> IamPrincipal:
        arn = iam_arn(acct.account_id, "role", name)
        if str(arn) in acct.principals:
            raise SpecError(f"duplicate role {name!r}", "roles")
        p = IamPrincipal(arn=arn, kind=PrincipalKind.ROLE, attached_policies=[managed_policy(n) for n in policies], created=now, tags=dict(tags))
        acct.principals[str(arn)] = p
        return p

    def add_bucket(acct: Account, name: str, public: bool, shared_with: list[str], objects: list[tuple[str, int]], tags: dict) -> S3Bucket:
        if any(name in a.buckets for a in env.accounts.values()):
            raise SpecError(f"duplicate bucket {name!r}", "buckets")
        arn = bucket_arn(acct.account_id, name)
        policy = PolicyDoc("BucketPolicy", [])
        if public:
            policy.statements.append(Statement(["s3:GetObject", "s3:ListBucket"], [str(arn)], ["*"]))
        for alias in shared_with:
            policy.statements.append(Statement(["s3:Get*", "s3:List*"], [str(arn)], [env.account(alias).account_id]))
        b = S3Bucket(name, arn, policy, objects=[S3Object(k, s, now) for k, s in objects], tags=dict(tags), created=now)
        b.refresh_public()
        acct.buckets[name] = b
        return b

    def add_sg(acct: Account, name: str, ingress: list[IngressRule]) -> SecurityGroup:
        gid = env.mint_hex("sg-", 17)
        sg = SecurityGroup(gid, name, security_group_arn(spec.region, acct.account_id, gid), [IngressRule(r.port, r.cidr, r.protocol) for r in ingress])
        acct.security_groups[gid] = sg
        return sg

    def add_instance(acct: Account, name: str, profile: str | None, groups: list[str], itype: str) -> Ec2Instance:
        iid = env.mint_hex("i-0", 16)
        prof_arn = None
        managed = False
        if profile is not None:
            role = env.find_principal(PrincipalKind.ROLE, profile, acct.alias)
            prof_arn = role.arn
            managed = role.allows("ssm:UpdateInstanceInformation", "*")
        sg_ids = [env.security_group(g)[1].group_id for g in groups]
        inst = Ec2Instance(iid, name, instance_arn(spec.region, acct.account_id, iid), spec.region, prof_arn, sg_ids,
                           InstanceState.RUNNING, itype, launch_time=now, ssm_managed=managed)
        acct.instances[iid] = inst
        return inst

    # declared resources first, in a fixed order
    for d in spec.users:
        add_user(env.account(d.account), d.name, d.policies, d.password, d.mfa, d.access_keys, d.tags)
    for d in spec.roles:
        add_role(env.account(d.account), d.name, d.policies, d.tags)
    for d in spec.roles:
        role = env.find_principal(PrincipalKind.ROLE, d.name, d.account)
        for ref in d.trusted:
            src = env.find_principal(ref.kind, ref.name, ref.account)
            env.add_trust_edge(str(src.arn), str(role.arn))
    for d in spec.buckets:
        add_bucket(env.account(d.account), d.name, d.public, d.shared_with, [(o.key, o.size) for o in d.objects], d.tags)
    for d in spec.security_groups:
        add_sg(env.account(d.account), d.name, d.ingress)
    for d in spec.instances:
        add_instance(env.account(d.account), d.name, d.profile, d.security_groups, d.instance_type)

    # background resources
    primary = env.primary
    for _ in range(counts["users"]):
        name = names.unique(rng, names.user_name, taken)
        pol = rng.choice(["ReadOnlyAccess", "PowerUserAccess", "AmazonS3ReadOnlyAccess", "IAMUserChangePassword"])
        console = category is Category.BRUTE_FORCE or rng.random() < 0.5
        add_user(primary, name, [pol], names.person_name(rng) + "!" + str(rng.randrange(1000)) if console else None,
                 rng.random() < 0.6, 1, {})
    for _ in range(counts["roles"]):
        name = names.unique(rng, names.role_name, taken)
        add_role(primary, name, [rng.choice(["AmazonS3ReadOnlyAccess", "ReadOnlyAccess", "AmazonSSMManagedInstanceCore"])], {})
    if category is Category.UNAUTHORIZED_ACCESS and counts["roles"] > 0:
        shared = env.account("shared-services")
        name = names.unique(rng, names.role_name, taken)
        target = add_role(shared, name, ["AmazonS3ReadOnlyAccess"], {})
        sources = primary.roles() or primary.users()
        if sources:
            env.add_trust_edge(str(rng.choice(sources).arn), str(target.arn))
    for _ in range(counts["buckets"]):
        name = names.unique(rng, names.bucket_name, taken)
        objs = [(names.object_key(rng), rng.randrange(2_000, 40_000_000)) for _ in range(rng.randrange(3, 9))]
        objs = list(dict(objs).items())
        add_bucket(primary, name, False, [], objs, {})
    for _ in range(counts["security_groups"]):
        name = names.unique(rng, names.security_group_name, taken)
        add_sg(primary, name, [IngressRule(443, "0.0.0.0/0")] if rng.random() < 0.5 else [IngressRule(22, "10.0.0.0/8")])
    if counts["instances"] > 0:
        roles = primary.roles()
        if not roles:
            name = names.unique(rng, names.role_name, taken)
            roles = [add_role(primary, name, ["AmazonSSMManagedInstanceCore"], {})]
        for _ in range(counts["instances"]):
            name = names.unique(rng, names.host_name, taken)
            sgs = [rng.choice(list(primary.security_groups.values())).name] if primary.security_groups else []
            add_instance(primary, name, rng.choice(roles).name, sgs, rng.choice(names.INSTANCE_TYPES))
    for i in range(counts["trails"]):
        name = names.TRAIL_NAMES[i % len(names.TRAIL_NAMES)] + ("" if i < len(names.TRAIL_NAMES) else f"-{i}")
        primary.trails[name] = Trail(name, trail_arn(spec.region, primary.account_id, name))
    return env


# --- control actions ----------------------------------------------------------


class ActorKind(str, enum.Enum):
    USER = "user"
    ROLE = "role"
    ANONYMOUS = "anonymous"
    SERVICE = "service"


@dataclass(frozen=True)
class Actor:
    """Who performs an action, and from where.

    Role actors act through their most recent session (or a named one); a role
    used as an instance profile gets an implicit session named after the instance.
    """

    kind: ActorKind
    name: str | None = None
    account: str = "primary"
    source_ip: str = "10.0.0.10"
    session: str | None = None


@dataclass(frozen=True)
class ControlAction:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


class _Denied(Exception):
    def __init__(self, code: str):
        super().__init__(code)
        self.code = code


class _Ctx:
    def __init__(self, env: Environment, action: ControlAction, actor: Actor, at: int,
                 identity: UserIdentity, principal: IamPrincipal | None):
        self.env = env
        self.params = action.params
        self.actor = actor
        self.at = at
        self.identity = identity
        self.principal = principal
        self.request: dict[str, Any] = {}
        self.resources: list[str] = []
        self.region = env.region

    def param(self, key: str, default: Any = ...) -> Any:
        if key in self.params:
            return self.params[key]
        if default is ...:
            raise ActionError(f"missing parameter {key!r}")
        return default

    def touch(self, arn: Arn | str) -> str:
        s = str(arn)
        if s not in self.resources:
            self.resources.append(s)
        return s

    def authorize(self, iam_action: str, resource: Arn | str, bucket: S3Bucket | None = None) -> None:
        res = str(resource)
        ident = self.identity
        if ident.kind is IdentityKind.SERVICE:
            return
        if ident.kind is IdentityKind.ANONYMOUS:
            if bucket is not None and bucket.policy.grants("*", iam_action, res):
                return
            raise _Denied("AccessDenied")
        assert self.principal is not None
        if not self.principal.allows(iam_action, res):
            raise _Denied("AccessDenied")
        if bucket is not None and bucket.arn.account_id != self.principal.arn.account_id:
            if not bucket.policy.grants(self.principal.arn.account_id, iam_action, res):
                raise _Denied("AccessDenied")


def _resolve_actor(env: Environment, actor: Actor, at: int) -> tuple[UserIdentity, IamPrincipal | None]:
    kind = ActorKind(actor.kind)
    if kind is ActorKind.ANONYMOUS:
        return UserIdentity(IdentityKind.ANONYMOUS), None
    if kind is ActorKind.SERVICE:
        return UserIdentity(IdentityKind.SERVICE, arn=None, account_id=None, access_key_id=None), None
    if actor.name is None:
        raise ActionError(f"{kind.value} actor needs a name")
    p = env.find_principal(PrincipalKind(kind.value), actor.name, actor.account)
    acct = p.arn.account_id
    if kind is ActorKind.USER:
        key = p.newest_active_key()
        return UserIdentity(IdentityKind.IAM_USER, str(p.arn), acct, key.key_id if key else None), p
    sessions = env.sessions.get(str(p.arn), [])
    if actor.session is not None:
        sessions = [s for s in sessions if s.session_name == actor.session]
    if sessions:
        sess = sessions[-1]
    else:
        host = next(
            (i for a in env.accounts.values() for i in a.instances.values()
             if i.profile is not None and str(i.profile) == str(p.arn) and i.state is not InstanceState.TERMINATED
             and (actor.session is None or actor.session in (i.instance_id, i.name))),
            None,
        )
        if host is None:
            raise ActionError(f"role {actor.name!r} has no active session")
        sess = RoleSession(host.instance_id, env.mint_key_id("ASIA"), at, host.instance_id)
        env.sessions.setdefault(str(p.arn), []).append(sess)
    arn = f"arn:aws:sts::{acct}:assumed-role/{p.name}/{sess.session_name}"
    return UserIdentity(IdentityKind.ASSUMED_ROLE, arn, acct, sess.access_key_id), p


_Handler = Callable[[_Ctx], dict]


@dataclass(frozen=True)
class ActionDef:
    name: str
    source: str  # event source, e.g. "s3.amazonaws.com"
    iam_action: str
    handler: _Handler
    read_only: bool


ACTIONS: dict[str, ActionDef] = {}


def _action(name: str, service: str, read_only: bool = False):
    def register(fn: _Handler) -> _Handler:
        ACTIONS[name] = ActionDef(name, f"{service}.amazonaws.com", f"{service}:{name}", fn, read_only)
        return fn
    return register


# -- sign-in / STS --

@_action("ConsoleLogin", "signin")
def _console_login(ctx: _Ctx) -> dict:
    user = ctx.principal
    if user is None or user.kind is not PrincipalKind.USER:
        raise ActionError("ConsoleLogin requires a user actor")
    ctx.request = {"userName": user.name}
    ctx.touch(user.arn)
    password = ctx.param("password")
    if user.password_digest is None or password_digest(password) != user.password_digest:
        raise _Denied("FailedAuthentication")
    return {"ConsoleLogin": "Success", "MFAUsed": "Yes" if user.mfa else "No"}


@_action("AssumeRole", "sts")
def _assume_role(ctx: _Ctx) -> dict:
    role = ctx.env.find_principal(PrincipalKind.ROLE, ctx.param("role"), ctx.param("account", "primary"))
    session = ctx.param("session_name")
    ctx.request = {"roleArn": str(role.arn), "roleSessionName": session}
    if "external_id" in ctx.params:
        ctx.request["externalId"] = ctx.params["external_id"]
    ctx.touch(role.arn)
    caller = ctx.principal
    if caller is None or not ctx.env.trusts(str(caller.arn), str(role.arn)):
        raise _Denied("AccessDenied")
    key = ctx.env.mint_key_id("ASIA")
    ctx.env.sessions.setdefault(str(role.arn), []).append(RoleSession(session, key, ctx.at, str(caller.arn)))
    return {
        "credentials": {"accessKeyId": key},
        "assumedRoleUser": {"arn": f"arn:aws:sts::{role.arn.account_id}:assumed-role/{role.name}/{session}"},
    }


@_action("GetCallerIdentity", "sts", read_only=True)
def _get_caller_identity(ctx: _Ctx) -> dict:
    return {}


# -- IAM --

def _iam_target(ctx: _Ctx, kind: PrincipalKind, key: str) -> IamPrincipal:
    account = ctx.param("account", ctx.principal.arn.account_id if ctx.principal else "primary")
    p = ctx.env.find_principal(kind, ctx.param(key), account)
    ctx.request[f"{kind.value}Name"] = p.name
    ctx.touch(p.arn)
    return p


def _account_root(ctx: _Ctx) -> str:
    acct = ctx.principal.arn.account_id if ctx.principal else ctx.env.primary.account_id
    return f"arn:aws:iam::{acct}:root"


@_action("ListUsers", "iam", read_only=True)
def _list_users(ctx: _Ctx) -> dict:
    ctx.authorize("iam:ListUsers", _account_root(ctx))
    return {}


@_action("ListRoles", "iam", read_only=True)
def _list_roles(ctx: _Ctx) -> dict:
    ctx.authorize("iam:ListRoles", _account_root(ctx))
    return {}


@_action("GetAccountAuthorizationDetails", "iam", read_only=True)
def _get_account_authorization_details(ctx: _Ctx) -> dict:
    ctx.authorize("iam:GetAccountAuthorizationDetails", _account_root(ctx))
    return {}


@_action("GetUser", "iam", read_only=True)
def _get_user(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    ctx.authorize("iam:GetUser", p.arn)
    return {}


@_action("GetRole", "iam", read_only=True)
def _get_role(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.ROLE, "role")
    ctx.authorize("iam:GetRole", p.arn)
    return {}


@_action("ListAttachedRolePolicies", "iam", read_only=True)
def _list_attached_role_policies(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.ROLE, "role")
    ctx.authorize("iam:ListAttachedRolePolicies", p.arn)
    return {}


@_action("ListAttachedUserPolicies", "iam", read_only=True)
def _list_attached_user_policies(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    ctx.authorize("iam:ListAttachedUserPolicies", p.arn)
    return {}


@_action("CreateUser", "iam")
def _create_user(ctx: _Ctx) -> dict:
    acct = ctx.env.account(ctx.param("account", ctx.principal.arn.account_id if ctx.principal else "primary"))
    name = ctx.param("user")
    arn = iam_arn(acct.account_id, "user", name)
    ctx.request = {"userName": name}
    ctx.touch(arn)
    ctx.authorize("iam:CreateUser", arn)
    if str(arn) in acct.principals:
        raise _Denied("EntityAlreadyExists")
    acct.principals[str(arn)] = IamPrincipal(arn, PrincipalKind.USER, created=ctx.at)
    return {"user": {"userName": name, "arn": str(arn)}}


@_action("CreateAccessKey", "iam")
def _create_access_key(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    ctx.authorize("iam:CreateAccessKey", p.arn)
    key = AccessKey(ctx.env.mint_key_id(), ctx.at)
    p.access_keys.append(key)
    return {"accessKey": {"userName": p.name, "accessKeyId": key.key_id, "status": "Active"}}


@_action("UpdateAccessKey", "iam")
def _update_access_key(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    key_id = ctx.param("key_id")
    status = ctx.param("status")
    ctx.request.update({"accessKeyId": key_id, "status": status})
    ctx.authorize("iam:UpdateAccessKey", p.arn)
    key = next((k for k in p.access_keys if k.key_id == key_id), None)
    if key is None:
        raise _Denied("NoSuchEntity")
    key.status = status
    return {}


@_action("CreateLoginProfile", "iam")
def _create_login_profile(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    ctx.authorize("iam:CreateLoginProfile", p.arn)
    if p.password_digest is not None:
        raise _Denied("EntityAlreadyExists")
    p.password_digest = password_digest(ctx.param("password"))
    return {"loginProfile": {"userName": p.name}}


@_action("UpdateLoginProfile", "iam")
def _update_login_profile(ctx: _Ctx) -> dict:
    p = _iam_target(ctx, PrincipalKind.USER, "user")
    ctx.request["passwordResetRequired"] = bool(ctx.param("reset_required", False))
    ctx.authorize("iam:UpdateLoginProfile", p.arn)
    p.password_digest = password_digest(ctx.param("password"))
    return {}


def _attach(ctx: _Ctx, kind: PrincipalKind, key: str, api: str) -> dict:
    p = _iam_target(ctx, kind, key)
    policy = ctx.param("policy")
    ctx.request["policyArn"] = f"arn:aws:iam::aws:policy/{policy}"
    ctx.authorize(f"iam:{api}", p.arn)
    doc = managed_policy(policy)
    if all(x.name != doc.name for x in p.attached_policies):
        p.attached_policies.append(doc)
    return {}


@_action("AttachUserPolicy", "iam")
def _attach_user_policy(ctx: _Ctx) -> dict:
    return _attach(ctx, PrincipalKind.USER, "user", "AttachUserPolicy")


@_action("AttachRolePolicy", "iam")
def _attach_role_policy(ctx: _Ctx) -> dict:
    return _attach(ctx, PrincipalKind.ROLE, "role", "AttachRolePolicy")


@_action("UpdateAssumeRolePolicy", "iam")
def _update_assume_role_policy(ctx: _Ctx) -> dict:
    role = _iam_target(ctx, PrincipalKind.ROLE, "role")
    src = ctx.env.find_principal(ctx.param("trusted_kind", "user"), ctx.param("trusted"), ctx.param("trusted_account", "primary"))
    ctx.request["policyDocument"] = {"Principal": {"AWS": str(src.arn)}, "Action": "sts:AssumeRole"}
    ctx.authorize("iam:UpdateAssumeRolePolicy", role.arn)
    ctx.env.add_trust_edge(str(src.arn), str(role.arn))
    return {}


# -- S3 --

def _bucket(ctx: _Ctx) -> S3Bucket:
    _, b = ctx.env.bucket(ctx.param("bucket"))
    ctx.request["bucketName"] = b.name
    ctx.touch(b.arn)
    return b


@_action("ListBuckets", "s3", read_only=True)
def _list_buckets(ctx: _Ctx) -> dict:
    ctx.authorize("s3:ListAllMyBuckets", "*")
    return {}


@_action("CreateBucket", "s3")
def _create_bucket(ctx: _Ctx) -> dict:
    name = ctx.param("bucket")
    acct = ctx.env.account(ctx.principal.arn.account_id if ctx.principal else "primary")
    arn = bucket_arn(acct.account_id, name)
    ctx.request = {"bucketName": name}
    ctx.touch(arn)
    ctx.authorize("s3:CreateBucket", arn)
    if any(name in a.buckets for a in ctx.env.accounts.values()):
        raise _Denied("BucketAlreadyExists")
    acct.buckets[name] = S3Bucket(name, arn, PolicyDoc("BucketPolicy", []), created=ctx.at)
    return {}


@_action("PutBucketPolicy", "s3")
def _put_bucket_policy(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    public = bool(ctx.param("public", False))
    grantees = ["*"] if public else [ctx.env.account(a).account_id for a in ctx.param("principal_accounts", [])]
    actions = ctx.param("actions", ["s3:GetObject", "s3:ListBucket"])
    ctx.request["bucketPolicy"] = {"Statement": [{"Effect": "Allow", "Principal": p, "Action": actions} for p in grantees]}
    ctx.authorize("s3:PutBucketPolicy", b.arn)
    b.policy = PolicyDoc("BucketPolicy", [Statement(list(actions), [str(b.arn)], [p]) for p in grantees])
    b.refresh_public()
    return {}


@_action("DeleteBucketPolicy", "s3")
def _delete_bucket_policy(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    ctx.authorize("s3:DeleteBucketPolicy", b.arn)
    b.policy = PolicyDoc("BucketPolicy", [])
    b.refresh_public()
    return {}


@_action("PutBucketAcl", "s3")
def _put_bucket_acl(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    acl = ctx.param("acl")
    if acl not in ("private", "public-read"):
        raise ActionError(f"unsupported canned ACL {acl!r}")
    ctx.request["x-amz-acl"] = acl
    ctx.authorize("s3:PutBucketAcl", b.arn)
    b.policy.statements = [s for s in b.policy.statements if "*" not in s.principals]
    if acl == "public-read":
        b.policy.statements.append(Statement(["s3:GetObject", "s3:ListBucket"], [str(b.arn)], ["*"]))
    b.refresh_public()
    return {}


@_action("PutBucketTagging", "s3")
def _put_bucket_tagging(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    tags = dict(ctx.param("tags"))
    ctx.request["Tagging"] = {"TagSet": [{"Key": k, "Value": v} for k, v in tags.items()]}
    ctx.authorize("s3:PutBucketTagging", b.arn)
    b.tags = tags
    return {}


@_action("GetBucketPolicy", "s3", read_only=True)
def _get_bucket_policy(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    ctx.authorize("s3:GetBucketPolicy", b.arn)
    return {}


def _list_objects(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    if "prefix" in ctx.params:
        ctx.request["prefix"] = ctx.params["prefix"]
    ctx.authorize("s3:ListBucket", b.arn, bucket=b)
    prefix = ctx.params.get("prefix", "")
    return {"keyCount": sum(1 for o in b.objects if o.key.startswith(prefix))}


@_action("ListObjects", "s3", read_only=True)
def _list_objects_v1(ctx: _Ctx) -> dict:
    return _list_objects(ctx)


@_action("ListObjectsV2", "s3", read_only=True)
def _list_objects_v2(ctx: _Ctx) -> dict:
    return _list_objects(ctx)


def _read_object(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    key = ctx.param("key")
    ctx.request["key"] = key
    ctx.authorize("s3:GetObject", b.arn, bucket=b)
    obj = b.find(key)
    if obj is None:
        raise _Denied("NoSuchKey")
    return {"bytesTransferredOut": obj.size}


@_action("GetObject", "s3", read_only=True)
def _get_object(ctx: _Ctx) -> dict:
    return _read_object(ctx)


@_action("SelectObjectContent", "s3", read_only=True)
def _select_object_content(ctx: _Ctx) -> dict:
    ctx.request["expression"] = ctx.params.get("expression", "SELECT * FROM S3Object")
    return _read_object(ctx)


@_action("PutObject", "s3")
def _put_object(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    key = ctx.param("key")
    size = int(ctx.param("size", 1024))
    ctx.request["key"] = key
    ctx.authorize("s3:PutObject", b.arn, bucket=b)
    existing = b.find(key)
    if existing is not None:
        existing.size, existing.last_modified = size, ctx.at
    else:
        b.objects.append(S3Object(key, size, ctx.at))
    return {"bytesTransferredIn": size}


@_action("DeleteObject", "s3")
def _delete_object(ctx: _Ctx) -> dict:
    b = _bucket(ctx)
    key = ctx.param("key")
    ctx.request["key"] = key
    ctx.authorize("s3:DeleteObject", b.arn, bucket=b)
    if b.find(key) is None:
        raise _Denied("NoSuchKey")
    b.objects = [o for o in b.objects if o.key != key]
    return {}


# -- EC2 --

def _instance(ctx: _Ctx) -> Ec2Instance:
    _, inst = ctx.env.instance(ctx.param("instance"))
    ctx.request["instanceId"] = inst.instance_id
    ctx.touch(inst.arn)
    ctx.region = inst.region
    return inst


def _sg(ctx: _Ctx) -> SecurityGroup:
    _, sg = ctx.env.security_group(ctx.param("group"))
    ctx.request["groupId"] = sg.group_id
    ctx.touch(sg.arn)
    return sg


@_action("DescribeInstances", "ec2", read_only=True)
def _describe_instances(ctx: _Ctx) -> dict:
    ctx.authorize("ec2:DescribeInstances", "*")
    return {}


@_action("DescribeSecurityGroups", "ec2", read_only=True)
def _describe_security_groups(ctx: _Ctx) -> dict:
    ctx.authorize("ec2:DescribeSecurityGroups", "*")
    return {}


@_action("RunInstances", "ec2")
def _run_instances(ctx: _Ctx) -> dict:
    env = ctx.env
    acct = env.account(ctx.principal.arn.account_id if ctx.principal else "primary")
    count = int(ctx.param("count", 1))
    itype = ctx.param("instance_type", "t3.medium")
    image = ctx.param("image_id", "ami-0abcdef1234567890")
    base_name = ctx.param("name")
    groups = [env.security_group(g)[1].group_id for g in ctx.param("security_groups", [])]
    profile = ctx.params.get("profile")
    prof_arn = env.find_principal(PrincipalKind.ROLE, profile, acct.alias).arn if profile else None
    ctx.request = {"instanceType": itype, "imageId": image, "minCount": count, "maxCount": count}
    if prof_arn is not None:
        ctx.request["iamInstanceProfile"] = {"arn": str(prof_arn)}
    ctx.authorize("ec2:RunInstances", "*")
    items = []
    for n in range(count):
        iid = env.mint_hex("i-0", 16)
        name = base_name if count == 1 else f"{base_name}-{n + 1}"
        inst = Ec2Instance(iid, name, instance_arn(env.region, acct.account_id, iid), env.region, prof_arn, groups,
                           InstanceState.PENDING, itype, image, ctx.at, ssm_managed=False)
        inst.state = InstanceState.RUNNING
        acct.instances[iid] = inst
        ctx.touch(inst.arn)
        items.append({"instanceId": iid, "instanceType": itype})
    return {"instancesSet": {"items": items}}


def _transition(ctx: _Ctx, api: str, target: InstanceState) -> dict:
    inst = _instance(ctx)
    ctx.authorize(f"ec2:{api}", inst.arn)
    if target not in _TRANSITIONS[inst.state]:
        raise _Denied("IncorrectInstanceState")
    previous = inst.state
    inst.state = target
    return {"instancesSet": {"items": [{"instanceId": inst.instance_id, "previousState": previous.value, "currentState": target.value}]}}


@_action("StartInstances", "ec2")
def _start_instances(ctx: _Ctx) -> dict:
    return _transition(ctx, "StartInstances", InstanceState.RUNNING)


@_action("StopInstances", "ec2")
def _stop_instances(ctx: _Ctx) -> dict:
    return _transition(ctx, "StopInstances", InstanceState.STOPPED)


@_action("TerminateInstances", "ec2")
def _terminate_instances(ctx: _Ctx) -> dict:
    return _transition(ctx, "TerminateInstances", InstanceState.TERMINATED)


@_action("ModifyInstanceAttribute", "ec2")
def _modify_instance_attribute(ctx: _Ctx) -> dict:
    inst = _instance(ctx)
    data = ctx.param("user_data")
    ctx.request["userData"] = data
    ctx.authorize("ec2:ModifyInstanceAttribute", inst.arn)
    inst.user_data = data
    return {}


@_action("CreateSecurityGroup", "ec2")
def _create_security_group(ctx: _Ctx) -> dict:
    env = ctx.env
    acct = env.account(ctx.principal.arn.account_id if ctx.principal else "primary")
    name = ctx.param("group")
    ctx.request = {"groupName": name}
    ctx.authorize("ec2:CreateSecurityGroup", "*")
    gid = env.mint_hex("sg-", 17)
    sg = SecurityGroup(gid, name, security_group_arn(env.region, acct.account_id, gid))
    acct.security_groups[gid] = sg
    ctx.touch(sg.arn)
    return {"groupId": gid}


def _ingress(ctx: _Ctx, api: str, add: bool) -> dict:
    sg = _sg(ctx)
    rule = IngressRule(int(ctx.param("port")), ctx.param("cidr"), ctx.param("protocol", "tcp"))
    ctx.request["ipPermissions"] = {"items": [{"ipProtocol": rule.protocol, "fromPort": rule.port, "toPort": rule.port,
                                               "ipRanges": {"items": [{"cidrIp": rule.cidr}]}}]}
    ctx.authorize(f"ec2:{api}", sg.arn)
    present = any(r == rule for r in sg.ingress)
    if add:
        if present:
            raise _Denied("InvalidPermission.Duplicate")
        sg.ingress.append(rule)
    else:
        if not present:
            raise _Denied("InvalidPermission.NotFound")
        sg.ingress = [r for r in sg.ingress if r != rule]
    return {"_return": True}


@_action("AuthorizeSecurityGroupIngress", "ec2")
def _authorize_ingress(ctx: _Ctx) -> dict:
    return _ingress(ctx, "AuthorizeSecurityGroupIngress", True)


@_action("RevokeSecurityGroupIngress", "ec2")
def _revoke_ingress(ctx: _Ctx) -> dict:
    return _ingress(ctx, "RevokeSecurityGroupIngress", False)


# -- SSM --

def _run_command(ctx: _Ctx, api: str) -> dict:
    inst = _instance(ctx)
    commands = list(ctx.param("commands"))
    document = ctx.param("document", "AWS-RunShellScript")
    ctx.request = {"instanceIds": [inst.instance_id], "documentName": document, "parameters": {"commands": commands}}
    if "comment" in ctx.params:
        ctx.request["comment"] = ctx.params["comment"]
    ctx.authorize(f"ssm:{api}", inst.arn)
    if not inst.ssm_managed or inst.state is not InstanceState.RUNNING:
        raise _Denied("InvalidInstanceId")
    ident = ctx.env.mint_hex("", 32)
    key = "commandId" if api == "SendCommand" else "associationId"
    return {key: f"{ident[:8]}-{ident[8:12]}-{ident[12:16]}-{ident[16:20]}-{ident[20:32]}"}


@_action("SendCommand", "ssm")
def _send_command(ctx: _Ctx) -> dict:
    return _run_command(ctx, "SendCommand")


@_action("CreateAssociation", "ssm")
def _create_association(ctx: _Ctx) -> dict:
    return _run_command(ctx, "CreateAssociation")


@_action("StartSession", "ssm")
def _start_session(ctx: _Ctx) -> dict:
    inst = _instance(ctx)
    ctx.request = {"target": inst.instance_id}
    ctx.authorize("ssm:StartSession", inst.arn)
    if not inst.ssm_managed or inst.state is not InstanceState.RUNNING:
        raise _Denied("TargetNotConnected")
    return {"sessionId": ctx.env.mint_hex("session-", 17)}


# -- CloudTrail --

def _trail(ctx: _Ctx) -> Trail:
    _, t = ctx.env.trail(ctx.param("trail"))
    ctx.request["name"] = t.name
    ctx.touch(t.arn)
    return t


@_action("StopLogging", "cloudtrail")
def _stop_logging(ctx: _Ctx) -> dict:
    t = _trail(ctx)
    ctx.authorize("cloudtrail:StopLogging", t.arn)
    t.logging = False
    return {}


@_action("StartLogging", "cloudtrail")
def _start_logging(ctx: _Ctx) -> dict:
    t = _trail(ctx)
    ctx.authorize("cloudtrail:StartLogging", t.arn)
    t.logging = True
    return {}


def apply_control_action(env: Environment, action: ControlAction, actor: Actor, at: int) -> tuple[Environment, CloudEvent]:
    """Apply ``action`` at time ``at`` and return the (mutated) environment plus the emitted event.

    Raises :class:`ActionError` for structurally invalid actions and
    :class:`ResourceNotFound` when the action names a resource that was never
    provisioned.  Authorization failures are reported through the event's
    ``error_code`` instead.
    """
    if at < env.clock:
        raise ActionError(f"action time {at} precedes environment clock {env.clock}")
    defn = ACTIONS.get(action.name)
    if defn is None:
        raise ActionError(f"unknown action {action.name!r}")
    identity, principal = _resolve_actor(env, actor, at)
    env.clock = at
    ctx = _Ctx(env, action, actor, at, identity, principal)
    error = None
    try:
        response = defn.handler(ctx)
    except _Denied as denied:
        error, response = denied.code, {}
    env.seq += 1
    event = CloudEvent(
        event_id=env.mint_uuid(),
        event_time=at,
        event_source=defn.source,
        event_name=defn.name,
        region=ctx.region,
        source_ip=actor.source_ip,
        user_identity=identity,
        request_parameters=ctx.request,
        response_elements=response,
        error_code=error,
        resources=tuple(ctx.resources),
    )
    return env, event
