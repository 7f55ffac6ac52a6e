from __future__ import annotations

import copy
import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from irsim.cloud import (
    ActionError,
    Actor,
    ActorKind,
    Arn,
    ArnError,
    BucketDecl,
    ControlAction,
    EnvironmentSpec,
    InstanceDecl,
    InstanceState,
    ObjectDecl,
    PrincipalKind,
    PrincipalRef,
    ResourceNotFound,
    RoleDecl,
    UserDecl,
    apply_control_action,
    lookup_resource,
    provision_environment,
)
from irsim.core import CATEGORY_ORDER, Category, SpecError, derive_seed, format_ts, parse_ts, structure, unstructure
from irsim.telemetry import IdentityKind


def dump(env) -> str:
    return json.dumps(env.to_dict(), sort_keys=True)


def user(name, ip="203.0.113.7", account="primary"):
    return Actor(ActorKind.USER, name, account, ip)


def role(name, ip="203.0.113.7", account="primary"):
    return Actor(ActorKind.ROLE, name, account, ip)


@pytest.fixture
def env():
    spec = EnvironmentSpec(
        Category.UNAUTHORIZED_ACCESS,
        users=[UserDecl("vera.quill", password="correct-horse", policies=["ReadOnlyAccess"]),
               UserDecl("ops-admin", policies=["AdministratorAccess"])],
        roles=[RoleDecl("DataReaderRole", policies=["AmazonS3ReadOnlyAccess"],
                        trusted=[PrincipalRef(PrincipalKind.USER, "vera.quill")])],
        buckets=[BucketDecl("quill-ledger-0001", objects=[ObjectDecl("q/a.csv", 10)])],
        instances=[InstanceDecl("quill-host", profile="DataReaderRole")],
    )
    return provision_environment(spec, 7)


# --- core helpers ------------------------------------------------------------------


@given(st.integers(min_value=0, max_value=4_000_000_000_000))
def test_timestamp_round_trip(ms):
    assert parse_ts(format_ts(ms)) == ms


@pytest.mark.parametrize("bad", ["2025-03-01T10:00:00Z", "2025-03-01 10:00:00.000Z", "", "2025-03-01T10:00:00.000+00:00"])
def test_parse_ts_rejects_other_shapes(bad):
    with pytest.raises(ValueError):
        parse_ts(bad)


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(7, "bf-0001") == derive_seed(7, "bf-0001")
    assert derive_seed(7, "bf-0001") != derive_seed(7, "bf-0002")
    assert derive_seed(7, "a", "b") != derive_seed(7, "ab")
    assert 0 <= derive_seed(2**70, "x") < 2**64


def test_structure_rejects_unknown_fields():
    with pytest.raises((TypeError, ValueError, KeyError)):
        structure(UserDecl, {"name": "x", "bogus": 1})
    assert structure(UserDecl, unstructure(UserDecl("x", tags={"a": "b"}))) == UserDecl("x", tags={"a": "b"})


# --- ARNs -----------------------------------------------------------------------------


_tok = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_", min_size=1, max_size=12)


@given(_tok, _tok, st.one_of(st.just(""), _tok), st.from_regex(r"\A[0-9]{12}\Z"), st.lists(_tok, min_size=1, max_size=4))
def test_arn_round_trip(partition, service, region, account, path):
    a = Arn(partition, service, region, account, tuple(path))
    assert Arn.parse(str(a)) == a


@pytest.mark.parametrize("text", ["arn:aws:iam::12345:user/x", "not-an-arn", "arn:aws:iam::123456789012:", "arn:aws"])
def test_arn_parse_errors(text):
    with pytest.raises(ArnError):
        Arn.parse(text)


# --- provisioning --------------------------------------------------------------------


def test_brute_force_defaults_have_users_and_logging():
    env = provision_environment(EnvironmentSpec(Category.BRUTE_FORCE), 1)
    acct = env.primary
    assert len(acct.users()) >= 1
    assert acct.trails and all(t.logging for t in acct.trails.values())


def test_zero_counts_give_one_empty_account():
    zeros = dict.fromkeys(("users", "roles", "buckets", "instances", "security_groups", "trails"), 0)
    for cat in CATEGORY_ORDER:
        env = provision_environment(EnvironmentSpec(cat, counts=zeros), 3)
        assert len(env.accounts) == 1
        acct = env.primary
        assert not (acct.principals or acct.buckets or acct.instances or acct.security_groups or acct.trails)


def test_provisioning_is_deterministic_in_seed():
    spec = EnvironmentSpec(Category.MISCONFIGURATION)
    assert dump(provision_environment(spec, 7)) == dump(provision_environment(spec, 7))
    a, b = provision_environment(spec, 7), provision_environment(spec, 8)
    assert {x.name for x in a.primary.buckets.values()} != {x.name for x in b.primary.buckets.values()}


@pytest.mark.parametrize("spec, field", [
    (EnvironmentSpec(Category.BRUTE_FORCE, counts={"users": -1}), "counts.users"),
    (EnvironmentSpec(Category.BRUTE_FORCE, counts={"widgets": 1}), "counts.widgets"),
    (EnvironmentSpec("phishing"), "category"),
    (EnvironmentSpec(Category.BRUTE_FORCE, users=[UserDecl("x", account="elsewhere")]), "users[0].account"),
])
def test_invalid_specs_name_the_field(spec, field):
    with pytest.raises(SpecError) as exc:
        provision_environment(spec, 0)
    assert exc.value.field == field


def test_access_key_ids_unique(env):
    assert len(set(env.all_key_ids())) == len(env.all_key_ids())


def test_bucket_public_flag_tracks_policy():
    env = provision_environment(EnvironmentSpec(Category.MISCONFIGURATION, buckets=[BucketDecl("pub-0001", public=True),
                                                                                    BucketDecl("priv-0001")]), 0)
    assert env.bucket("pub-0001")[1].public
    assert not env.bucket("priv-0001")[1].public


# --- actions -------------------------------------------------------------------------


def test_assume_role_with_trust_edge(env):
    env, e = apply_control_action(env, ControlAction("AssumeRole", {"role": "DataReaderRole", "session_name": "s1"}),
                                  user("vera.quill"), env.clock + 1000)
    assert e.event_name == "AssumeRole" and e.error_code is None
    assert e.response_elements["credentials"]["accessKeyId"].startswith("ASIA")


def test_assume_role_without_trust_is_denied_not_raised(env):
    env, e = apply_control_action(env, ControlAction("AssumeRole", {"role": "DataReaderRole", "session_name": "s1"}),
                                  user("ops-admin"), env.clock + 1000)
    assert e.error_code == "AccessDenied"


def test_failed_console_login_leaves_state_unchanged(env):
    before = env.to_dict()
    at = env.clock + 5000
    env, e = apply_control_action(env, ControlAction("ConsoleLogin", {"password": "wrong"}), user("vera.quill"), at)
    after = env.to_dict()
    assert e.error_code and e.event_name == "ConsoleLogin"
    for k in ("clock", "seq", "minted"):
        before.pop(k), after.pop(k)
    assert before == after
    assert env.clock == at


def test_successful_console_login(env):
    env, e = apply_control_action(env, ControlAction("ConsoleLogin", {"password": "correct-horse"}), user("vera.quill"),
                                  env.clock + 1)
    assert e.error_code is None and e.response_elements["ConsoleLogin"] == "Success"


def test_put_bucket_policy_public(env):
    env, e = apply_control_action(env, ControlAction("PutBucketPolicy", {"bucket": "quill-ledger-0001", "public": True}),
                                  user("ops-admin"), env.clock + 1)
    assert e.error_code is None
    assert env.bucket("quill-ledger-0001")[1].public


def test_unknown_action_and_missing_resource_raise(env):
    with pytest.raises(ActionError):
        apply_control_action(env, ControlAction("LaunchRocket", {}), user("ops-admin"), env.clock + 1)
    with pytest.raises(ResourceNotFound):
        apply_control_action(env, ControlAction("GetObject", {"bucket": "nope-0000", "key": "k"}), user("ops-admin"),
                             env.clock + 1)


def test_clock_cannot_go_backwards(env):
    with pytest.raises(ActionError):
        apply_control_action(env, ControlAction("ListBuckets", {}), user("ops-admin"), env.clock - 1)


def test_anonymous_read_only_when_public(env):
    anon = Actor(ActorKind.ANONYMOUS, None, "primary", "198.51.100.9")
    get = ControlAction("GetObject", {"bucket": "quill-ledger-0001", "key": "q/a.csv"})
    env, e = apply_control_action(env, get, anon, env.clock + 1)
    assert e.error_code == "AccessDenied" and e.user_identity.kind is IdentityKind.ANONYMOUS
    env, _ = apply_control_action(env, ControlAction("PutBucketPolicy", {"bucket": "quill-ledger-0001", "public": True}),
                                  user("ops-admin"), env.clock + 1)
    env, e = apply_control_action(env, get, anon, env.clock + 1)
    assert e.error_code is None


def test_instance_lifecycle_and_lookup_of_terminated(env):
    _, inst = env.instance("quill-host")
    for action in ("StopInstances", "StartInstances", "TerminateInstances"):
        env, e = apply_control_action(env, ControlAction(action, {"instance": inst.instance_id}), user("ops-admin"),
                                      env.clock + 1)
        assert e.error_code is None
    found = lookup_resource(env, inst.arn)
    assert found is inst and found.state is InstanceState.TERMINATED
    env, e = apply_control_action(env, ControlAction("StartInstances", {"instance": inst.instance_id}),
                                  user("ops-admin"), env.clock + 1)
    assert e.error_code == "IncorrectInstanceState"


def test_lookup_resource(env):
    _, b = env.bucket("quill-ledger-0001")
    assert lookup_resource(env, str(b.arn)) is b
    assert lookup_resource(env, Arn("aws", "s3", "", "999999999999", ("quill-ledger-0001",))) is None
    with pytest.raises(ArnError):
        lookup_resource(env, "garbage")


_SAFE_ACTIONS = [
    ("ListBuckets", {}), ("ListUsers", {}), ("DescribeInstances", {}),
    ("GetObject", {"bucket": "quill-ledger-0001", "key": "q/a.csv"}),
    ("AssumeRole", {"role": "DataReaderRole", "session_name": "x"}),
    ("ConsoleLogin", {"password": "nope"}),
    ("CreateUser", {"user": "probe"}),
]


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.sampled_from(range(len(_SAFE_ACTIONS))), st.sampled_from(["vera.quill", "ops-admin"]),
                          st.integers(0, 5000)), min_size=1, max_size=25))
def test_event_totality_and_clock_monotonicity(env, script):
    env = copy.deepcopy(env)
    last = env.clock
    made = 0
    for idx, who, gap in script:
        name, params = _SAFE_ACTIONS[idx]
        if name == "CreateUser":
            params = {"user": f"probe-{made}"}
            made += 1
        env, e = apply_control_action(env, ControlAction(name, dict(params)), user(who), env.clock + gap)
        assert e.event_time >= last
        last = e.event_time
    # closure: trust edges and profiles still resolve
    for src, dst in env.trust_edges:
        assert env.principal(src) is not None and env.principal(dst) is not None
    for acct in env.accounts.values():
        for inst in acct.instances.values():
            assert inst.profile is None or env.principal(str(inst.profile)) is not None
