"""Wire types for the agent protocol.

One JSON object per line in each direction.  The harness sends ``case_start``
and ``tool_result``; the agent sends ``tool_call`` and finally ``final_report``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

from ..core import IrsimError, Verdict, structure, unstructure
from ..scenario import EvidenceArtifact, EvidenceKind


class MessageType(str, enum.Enum):
    CASE_START = "case_start"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    FINAL_REPORT = "final_report"


class ProtocolError(IrsimError, ValueError):
    pass


@dataclass
class ToolCall:
    call_id: str
    tool: str
    parameters: dict[str, Any] = field(default_factory=dict)


@dataclass
class ToolResult:
    call_id: str
    payload: Any = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Claim:
    statement: str
    evidence_refs: list[EvidenceArtifact] = field(default_factory=list)


@dataclass
class InvestigationReport:
    case_id: str
    verdict: Verdict
    claims: list[Claim] = field(default_factory=list)
    narrative: str | None = None

    def statements(self) -> list[str]:
        return [c.statement for c in self.claims]

    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "InvestigationReport":
        try:
            return structure(cls, data)
        except (TypeError, KeyError, ValueError) as exc:
            raise ProtocolError(f"invalid report: {exc}") from None

    @classmethod
    def no_report(cls, case_id: str) -> "InvestigationReport":
        return cls(case_id, Verdict.FP, [], None)


class SessionStatus(str, enum.Enum):
    COMPLETED = "completed"
    NO_REPORT = "no_report"  # limit breach, timeout, or clean exit without a report
    CRASHED = "crashed"  # agent died or broke the protocol


@dataclass
class TranscriptEntry:
    call: ToolCall
    result: ToolResult


@dataclass
class SessionTranscript:
    case_id: str
    entries: list[TranscriptEntry] = field(default_factory=list)
    call_count: int = 0
    wall_time_s: float = 0.0
    status: SessionStatus = SessionStatus.COMPLETED
    error: str | None = None
    limit_breached: str | None = None  # "max_tool_calls" or "timeout"

    def tools_invoked(self) -> list[str]:
        return [e.call.tool for e in self.entries]

    def to_dict(self) -> dict:
        return unstructure(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SessionTranscript":
        return structure(cls, data)


def encode(msg_type: MessageType, body: dict) -> str:
    return json.dumps({"type": msg_type.value, **body}, separators=(",", ":"), sort_keys=True)


def decode(line: str) -> tuple[MessageType, dict]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"message is not JSON: {exc.msg}") from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message must be an object with a 'type' field")
    try:
        kind = MessageType(msg.pop("type"))
    except ValueError:
        raise ProtocolError("unknown message type") from None
    return kind, msg


def parse_tool_call(body: dict) -> ToolCall:
    call_id, tool, params = body.get("call_id"), body.get("tool"), body.get("parameters", {})
    if not isinstance(call_id, str) or not isinstance(tool, str) or not isinstance(params, dict):
        raise ProtocolError("tool_call needs string call_id, string tool and object parameters")
    return ToolCall(call_id, tool, params)


def evidence(kind: str | EvidenceKind, value: str) -> EvidenceArtifact:
    return EvidenceArtifact(EvidenceKind(kind), value)
