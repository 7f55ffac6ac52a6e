from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsim.telemetry import (
    CloudEvent,
    EventLog,
    EventOrderError,
    EventQuery,
    EventQueryError,
    IdentityKind,
    LogParseError,
    UserIdentity,
    event_line,
    event_matches,
    lookup_events,
    parse_log,
    serialize_log,
)

T0 = 1_735_689_600_000  # 2025-01-01
ROLE = "arn:aws:iam::111122223333:role/Deployer"
SESSION = "arn:aws:sts::111122223333:assumed-role/Deployer/s1"
USERS = ["arn:aws:iam::111122223333:user/ana", "arn:aws:iam::111122223333:user/bo", SESSION, None]
NAMES = ["ConsoleLogin", "GetObject", "AssumeRole", "ListBuckets"]
BUCKETS = ["arn:aws:s3:::alpha-0001", "arn:aws:s3:::beta-0002"]


def ident(arn):
    if arn is None:
        return UserIdentity(IdentityKind.ANONYMOUS)
    kind = IdentityKind.ASSUMED_ROLE if ":assumed-role/" in arn else IdentityKind.IAM_USER
    return UserIdentity(kind, arn, "111122223333", "AKIA" + str(USERS.index(arn)).zfill(16))


def make_event(i, t, name="GetObject", who=USERS[0], resources=(), error=None):
    return CloudEvent(f"e-{i:05d}", t, "s3.amazonaws.com", name, "us-east-1", "203.0.113.5", ident(who),
                      {"n": i}, {}, error, tuple(resources))


@st.composite
def logs(draw):
    gaps = draw(st.lists(st.integers(0, 5000), min_size=0, max_size=60))
    t, events = T0, []
    for i, g in enumerate(gaps):
        t += g
        events.append(make_event(i, t, draw(st.sampled_from(NAMES)), draw(st.sampled_from(USERS)),
                                 draw(st.lists(st.sampled_from(BUCKETS), max_size=2, unique=True)),
                                 draw(st.sampled_from([None, None, "AccessDenied"]))))
    return EventLog(events)


@st.composite
def queries(draw):
    a = draw(st.one_of(st.none(), st.integers(T0 - 1000, T0 + 200_000)))
    b = draw(st.one_of(st.none(), st.integers(T0 - 1000, T0 + 200_000)))
    if a is not None and b is not None and a > b:
        a, b = b, a
    return EventQuery(a, b, draw(st.one_of(st.none(), st.sampled_from(NAMES))),
                      draw(st.one_of(st.none(), st.sampled_from(USERS[:3] + [ROLE]))),
                      draw(st.one_of(st.none(), st.sampled_from(BUCKETS))),
                      draw(st.integers(1, 7)))


def all_pages(log, q):
    out, token = [], None
    while True:
        page = lookup_events(log, EventQuery(q.start, q.end, q.event_name, q.principal, q.resource, q.max_results, token))
        assert len(page["events"]) <= q.max_results
        out += page["events"]
        token = page["next_page_token"]
        if token is None:
            return out


@settings(max_examples=150, deadline=None)
@given(logs(), queries())
def test_paginated_lookup_equals_linear_scan(log, q):
    expected = [e for e in log if event_matches(e, q)]
    assert all_pages(log, q) == expected


@settings(max_examples=60, deadline=None)
@given(logs())
def test_serialization_round_trip_is_byte_exact(log):
    text = serialize_log(log)
    again = parse_log(text)
    assert list(again) == list(log)
    assert serialize_log(again) == text


def test_role_principal_matches_its_sessions():
    log = EventLog([make_event(0, T0, who=SESSION), make_event(1, T0 + 1, who=USERS[0])])
    got = lookup_events(log, EventQuery(principal=ROLE))["events"]
    assert [e.event_id for e in got] == ["e-00000"]


def test_time_window_is_half_open():
    log = EventLog([make_event(i, T0 + i * 10) for i in range(5)])
    got = lookup_events(log, EventQuery(T0 + 10, T0 + 30))["events"]
    assert [e.event_time for e in got] == [T0 + 10, T0 + 20]


def test_query_validation():
    with pytest.raises(EventQueryError):
        EventQuery(start=5, end=4)
    with pytest.raises(EventQueryError):
        EventQuery(max_results=0)


def test_foreign_page_token_rejected():
    log = EventLog([make_event(i, T0 + i) for i in range(10)])
    token = lookup_events(log, EventQuery(max_results=3))["next_page_token"]
    assert token
    with pytest.raises(EventQueryError):
        lookup_events(log, EventQuery(event_name="GetObject", max_results=3, page_token=token))
    with pytest.raises(EventQueryError):
        lookup_events(log, EventQuery(page_token="!!not-a-token"))


def test_append_rejects_regression_and_duplicates():
    log = EventLog([make_event(0, T0 + 10)])
    with pytest.raises(EventOrderError):
        log.append(make_event(1, T0))
    with pytest.raises(EventOrderError):
        log.append(make_event(0, T0 + 20))
    log.append(make_event(2, T0 + 10))  # equal timestamps are fine
    assert len(log) == 2


def test_parse_errors_carry_line_numbers():
    good = [event_line(make_event(i, T0 + i)) for i in range(3)]
    with pytest.raises(LogParseError) as exc:
        parse_log("\n".join([good[0], good[1], "{oops"]) + "\n")
    assert exc.value.line == 3
    with pytest.raises(LogParseError) as exc:
        parse_log("\n".join([good[0], good[1].replace('"region"', '"regio"')]))
    assert exc.value.line == 2
    with pytest.raises(LogParseError) as exc:
        parse_log("\n".join([good[2], good[0]]))
    assert exc.value.line == 2


def test_assumed_role_issuer_arn():
    assert ident(SESSION).issuer_arn == ROLE
    assert ident(USERS[0]).issuer_arn == USERS[0]
    assert UserIdentity(IdentityKind.ANONYMOUS).issuer_arn is None
