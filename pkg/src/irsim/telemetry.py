"""CloudTrail-shaped audit events, the append-only event log and its query engine.

The on-disk form is one compact JSON object per line (``events.jsonl``).  Field
names and their order are fixed, so a parsed log re-serializes byte for byte.
"""

from __future__ import annotations

import base64
import bisect
import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterator

from .core import IrsimError, format_ts, parse_ts


class IdentityKind(str, enum.Enum):
    IAM_USER = "iam_user"
    ASSUMED_ROLE = "assumed_role"
    ANONYMOUS = "anonymous"
    SERVICE = "service"


@dataclass(frozen=True)
class UserIdentity:
    kind: IdentityKind
    arn: str | None = None
    account_id: str | None = None
    access_key_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "arn": self.arn,
            "account_id": self.account_id,
            "access_key_id": self.access_key_id,
        }

    @property
    def issuer_arn(self) -> str | None:
        """For an assumed-role session, the ARN of the role that issued it."""
        if self.kind is not IdentityKind.ASSUMED_ROLE or not self.arn:
            return self.arn
        head, _, resource = self.arn.rpartition(":")
        parts = resource.split("/")
        if len(parts) < 2 or parts[0] != "assumed-role":
            return self.arn
        account = head.rsplit(":", 1)[-1]
        return f"arn:aws:iam::{account}:role/{parts[1]}"


@dataclass(frozen=True)
class CloudEvent:
    event_id: str
    event_time: int  # ms since epoch, UTC
    event_source: str
    event_name: str
    region: str
    source_ip: str
    user_identity: UserIdentity
    request_parameters: dict[str, Any] = field(default_factory=dict)
    response_elements: dict[str, Any] = field(default_factory=dict)
    error_code: str | None = None
    resources: tuple[str, ...] = ()

    @property
    def succeeded(self) -> bool:
        return self.error_code is None

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "event_time": format_ts(self.event_time),
            "event_source": self.event_source,
            "event_name": self.event_name,
            "region": self.region,
            "source_ip": self.source_ip,
            "user_identity": self.user_identity.to_dict(),
            "request_parameters": self.request_parameters,
            "response_elements": self.response_elements,
            "error_code": self.error_code,
            "resources": list(self.resources),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CloudEvent":
        if not isinstance(data, dict):
            raise ValueError("event record must be an object")
        missing = [k for k in _FIELDS if k not in data]
        if missing:
            raise ValueError(f"missing field(s) {', '.join(missing)}")
        extra = [k for k in data if k not in _FIELDS]
        if extra:
            raise ValueError(f"unknown field(s) {', '.join(extra)}")
        ident = data["user_identity"]
        if not isinstance(ident, dict) or set(ident) != {"kind", "arn", "account_id", "access_key_id"}:
            raise ValueError("malformed user_identity")
        for key in ("event_id", "event_source", "event_name", "region", "source_ip"):
            if not isinstance(data[key], str) or not data[key]:
                raise ValueError(f"{key} must be a non-empty string")
        if not isinstance(data["request_parameters"], dict) or not isinstance(data["response_elements"], dict):
            raise ValueError("request_parameters/response_elements must be objects")
        if data["error_code"] is not None and not isinstance(data["error_code"], str):
            raise ValueError("error_code must be a string or null")
        if not isinstance(data["resources"], list):
            raise ValueError("resources must be a list")
        return cls(
            event_id=data["event_id"],
            event_time=parse_ts(data["event_time"]),
            event_source=data["event_source"],
            event_name=data["event_name"],
            region=data["region"],
            source_ip=data["source_ip"],
            user_identity=UserIdentity(
                kind=IdentityKind(ident["kind"]),
                arn=ident["arn"],
                account_id=ident["account_id"],
                access_key_id=ident["access_key_id"],
            ),
            request_parameters=data["request_parameters"],
            response_elements=data["response_elements"],
            error_code=data["error_code"],
            resources=tuple(data["resources"]),
        )


_FIELDS = (
    "event_id",
    "event_time",
    "event_source",
    "event_name",
    "region",
    "source_ip",
    "user_identity",
    "request_parameters",
    "response_elements",
    "error_code",
    "resources",
)


class EventOrderError(IrsimError, ValueError):
    pass


class EventQueryError(IrsimError, ValueError):
    pass


class LogParseError(IrsimError, ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class EventLog:
    """Append-only, time-ordered sequence of :class:`CloudEvent`."""

    def __init__(self, events: list[CloudEvent] | None = None):
        self._events: list[CloudEvent] = []
        self._times: list[int] = []
        self._by_id: dict[str, int] = {}
        for e in events or ():
            self.append(e)

    def append(self, e: CloudEvent) -> None:
        if self._times and e.event_time < self._times[-1]:
            raise EventOrderError(
                f"event {e.event_id} at {format_ts(e.event_time)} is older than the last "
                f"logged event at {format_ts(self._times[-1])}"
            )
        if e.event_id in self._by_id:
            raise EventOrderError(f"duplicate event_id {e.event_id}")
        self._by_id[e.event_id] = len(self._events)
        self._events.append(e)
        self._times.append(e.event_time)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[CloudEvent]:
        return iter(self._events)

    def __getitem__(self, i: int) -> CloudEvent:
        return self._events[i]

    def __contains__(self, event_id: object) -> bool:
        return event_id in self._by_id

    def get(self, event_id: str) -> CloudEvent | None:
        i = self._by_id.get(event_id)
        return None if i is None else self._events[i]

    def index_range(self, start: int | None, end: int | None) -> range:
        """Indices of events with ``start <= event_time < end``."""
        lo = 0 if start is None else bisect.bisect_left(self._times, start)
        hi = len(self._times) if end is None else bisect.bisect_left(self._times, end)
        return range(lo, max(lo, hi))


def append_event(log: EventLog, e: CloudEvent) -> EventLog:
    log.append(e)
    return log


@dataclass(frozen=True)
class EventQuery:
    """Conjunctive event filter.  ``start`` is inclusive and ``end`` exclusive; ``None`` means unbounded."""

    start: int | None = None
    end: int | None = None
    event_name: str | None = None
    principal: str | None = None  # identity ARN (role ARN matches its sessions) or access key id
    resource: str | None = None
    max_results: int = 50
    page_token: str | None = None

    def __post_init__(self) -> None:
        if self.start is not None and self.end is not None and self.start > self.end:
            raise EventQueryError("time range start must not be after end")
        if not isinstance(self.max_results, int) or isinstance(self.max_results, bool) or self.max_results < 1:
            raise EventQueryError("max_results must be a positive integer")

    def fingerprint(self) -> str:
        key = json.dumps(
            [self.start, self.end, self.event_name, self.principal, self.resource], separators=(",", ":")
        )
        return hashlib.sha256(key.encode()).hexdigest()[:12]


def event_matches(e: CloudEvent, q: EventQuery) -> bool:
    if q.start is not None and e.event_time < q.start:
        return False
    if q.end is not None and e.event_time >= q.end:
        return False
    if q.event_name is not None and e.event_name != q.event_name:
        return False
    if q.principal is not None:
        ident = e.user_identity
        if q.principal not in (ident.arn, ident.access_key_id, ident.issuer_arn):
            return False
    if q.resource is not None and q.resource not in e.resources:
        return False
    return True


def _encode_token(offset: int, fp: str) -> str:
    return base64.urlsafe_b64encode(f"{offset}:{fp}".encode()).decode().rstrip("=")


def _decode_token(token: str, fp: str) -> int:
    try:
        raw = base64.urlsafe_b64decode(token + "=" * (-len(token) % 4)).decode()
        offset_text, token_fp = raw.split(":")
        offset = int(offset_text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise EventQueryError(f"malformed page token {token!r}") from exc
    if offset < 0 or token_fp != fp:
        raise EventQueryError(f"page token {token!r} does not belong to this query")
    return offset


def lookup_events(log: EventLog, q: EventQuery) -> dict:
    """Matching events in time order, paginated: ``{"events": [...], "next_page_token": str | None}``."""
    fp = q.fingerprint()
    offset = 0 if q.page_token is None else _decode_token(q.page_token, fp)
    matches = [log[i] for i in log.index_range(q.start, q.end) if event_matches(log[i], q)]
    page = matches[offset : offset + q.max_results]
    nxt = offset + len(page)
    return {
        "events": page,
        "next_page_token": _encode_token(nxt, fp) if nxt < len(matches) else None,
    }


def event_line(e: CloudEvent) -> str:
    return json.dumps(e.to_dict(), separators=(",", ":"), ensure_ascii=False)


def serialize_log(log: EventLog) -> str:
    return "".join(event_line(e) + "\n" for e in log)


def parse_log(text: str) -> EventLog:
    log = EventLog()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for n, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogParseError(n, f"invalid JSON ({exc.msg})") from None
        try:
            e = CloudEvent.from_dict(record)
        except (ValueError, KeyError, TypeError) as exc:
            raise LogParseError(n, str(exc)) from None
        try:
            log.append(e)
        except EventOrderError as exc:
            raise LogParseError(n, str(exc)) from None
    return log
