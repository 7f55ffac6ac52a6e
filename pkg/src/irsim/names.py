"""Word lists for generated resource names.

All generated names come from these lists plus a seeded ``random.Random``, so
the same seed always yields the same environment.
"""

from __future__ import annotations

import random

FIRST_NAMES = [
    "alice", "bruno", "carmen", "deepak", "elena", "farid", "greta", "hiro", "ines", "jonas",
    "kavya", "lukas", "maya", "nadia", "omar", "priya", "quentin", "rosa", "sven", "tariq",
    "uma", "viktor", "wen", "ximena", "yusuf", "zofia",
]
LAST_NAMES = [
    "adler", "banerjee", "costa", "dubois", "eriksen", "fischer", "garcia", "haddad", "ito",
    "jensen", "kowalski", "lindqvist", "moreau", "novak", "okafor", "petrov", "quinn", "rossi",
    "schmidt", "tanaka", "ueda", "varga", "weber", "xu", "yamada", "zhang",
]
SERVICE_USERS = [
    "svc-reporting", "svc-etl", "svc-monitoring", "svc-billing", "svc-sync", "svc-archiver",
    "svc-notifier", "svc-indexer", "svc-scheduler", "svc-audit",
]
ROLE_STEMS = [
    "DataPipeline", "AppServer", "Analytics", "Deployment", "AuditReader", "Billing", "Support",
    "BatchWorker", "Reporting", "LogShipper", "Backup", "Ingest", "Search", "Payments",
]
COMPANY = [
    "acme", "globex", "initech", "umbrella", "hooli", "vandelay", "wonka", "tyrell", "cyberdyne",
    "soylent", "oscorp", "massive", "nakatomi", "gringotts", "monarch", "stark",
]
BUCKET_STEMS = [
    "payroll", "invoices", "backups", "logs", "media", "exports", "customer-data", "analytics",
    "archive", "assets", "reports", "contracts", "research", "hr-records", "ml-datasets",
    "build-cache", "billing-exports", "snapshots",
]
OBJECT_STEMS = [
    "report", "export", "dump", "ledger", "snapshot", "roster", "summary", "statement",
    "backup", "manifest", "dataset", "invoice",
]
OBJECT_EXTS = [".csv", ".json", ".parquet", ".tar.gz", ".xlsx", ".sql.gz"]
SG_STEMS = ["web-tier", "db-tier", "bastion", "app-tier", "internal", "admin-access", "cache", "worker"]
HOST_STEMS = ["web", "api", "worker", "batch", "bastion", "etl", "build", "jump"]
TRAIL_NAMES = ["management-events", "org-audit-trail", "security-trail", "cloudtrail-main"]
REGIONS = [
    "us-east-1", "us-east-2", "us-west-2", "eu-west-1", "eu-central-1", "ap-southeast-1",
    "ap-northeast-1", "ca-central-1", "sa-east-1", "eu-north-1",
]
INSTANCE_TYPES = ["t3.micro", "t3.medium", "m5.large", "c5.xlarge", "r5.large"]


def person_name(rng: random.Random) -> str:
    return f"{rng.choice(FIRST_NAMES)}.{rng.choice(LAST_NAMES)}"


def unique(rng: random.Random, make, taken: set[str], attempts: int = 200) -> str:
    """Draw names from ``make(rng)`` until one is not in ``taken``; numbered fallback after that."""
    for _ in range(attempts):
        name = make(rng)
        if name not in taken:
            taken.add(name)
            return name
    base = make(rng)
    n = 2
    while f"{base}-{n}" in taken:
        n += 1
    taken.add(f"{base}-{n}")
    return f"{base}-{n}"


def user_name(rng: random.Random) -> str:
    return person_name(rng) if rng.random() < 0.75 else rng.choice(SERVICE_USERS)


def role_name(rng: random.Random) -> str:
    return rng.choice(ROLE_STEMS) + rng.choice(["Role", "ServiceRole", "AccessRole"])


def bucket_name(rng: random.Random) -> str:
    return f"{rng.choice(COMPANY)}-{rng.choice(BUCKET_STEMS)}-{rng.randrange(1000, 10000)}"


def object_key(rng: random.Random) -> str:
    year = rng.randrange(2019, 2026)
    return f"{rng.choice(BUCKET_STEMS)}/{year}/{rng.choice(OBJECT_STEMS)}-{rng.randrange(1, 99):02d}{rng.choice(OBJECT_EXTS)}"


def security_group_name(rng: random.Random) -> str:
    return f"{rng.choice(SG_STEMS)}-{rng.choice(['sg', 'prod', 'shared', 'core'])}"


def host_name(rng: random.Random) -> str:
    return f"{rng.choice(HOST_STEMS)}-{rng.choice(['prod', 'stg', 'ops', 'int'])}-{rng.randrange(1, 40):02d}"


def external_ip(rng: random.Random) -> str:
    """An address from the documentation/test ranges, never a real host."""
    block = rng.choice(["198.51.100", "203.0.113", "192.0.2", "100.64.17", "100.71.44", "100.96.12"])
    return f"{block}.{rng.randrange(2, 250)}"


def corporate_ip(rng: random.Random) -> str:
    return f"10.{rng.randrange(10, 40)}.{rng.randrange(0, 255)}.{rng.randrange(2, 250)}"


# Alias vocabulary for renaming.  Disjoint from the lists above so a renamed
# scenario never reuses a generated or hand-written name.
ALIAS_FIRST = [
    "amara", "beatrix", "cyrus", "delphine", "emeric", "fenna", "gaspard", "halle", "idris", "jorunn",
    "kaito", "leocadia", "mattias", "noor", "orla", "pavel", "rhea", "silas", "thea", "ulrich",
    "vesna", "wilder", "yara", "zeno",
]
ALIAS_LAST = [
    "abernathy", "bellweather", "castellano", "drummond", "eastwood", "falkner", "grimaldi",
    "holloway", "ingram", "jablonski", "kilbride", "lockhart", "mcallister", "northcott",
    "oyelowo", "prendergast", "quarles", "ravensworth", "sorensen", "thorsby",
]
ALIAS_WORDS = [
    "amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "kestrel", "lumen", "mistral", "nimbus", "onyx", "pelican", "quill", "russet", "sierra", "tundra",
    "umber", "vertex", "willow", "xenon", "yarrow", "zephyr",
]
ALIAS_ORGS = ["bluefin", "copperline", "driftwood", "evergreen", "foxglove", "granite", "hollow", "ironbark"]
ALIAS_ROLE_STEMS = ["Atlas", "Beacon", "Cascade", "Drift", "Ember", "Falcon", "Glacier", "Horizon", "Ivory", "Jetty"]
