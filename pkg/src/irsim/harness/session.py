"""Session runner: one agent, one case, bounded by call and time limits."""

from __future__ import annotations

import json
import os
import queue
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Generator, Sequence, Union

from ..scenario import CaseBundle
from .protocol import (
    InvestigationReport,
    MessageType,
    ProtocolError,
    SessionStatus,
    SessionTranscript,
    ToolResult,
    TranscriptEntry,
    decode,
    encode,
    parse_tool_call,
)
from .tools import answer_tool_call, catalog_schema

DEFAULT_MAX_TOOL_CALLS = 50
DEFAULT_TIMEOUT_S = 120.0
STDERR_TAIL = 2000


@dataclass(frozen=True)
class Limits:
    max_tool_calls: int = DEFAULT_MAX_TOOL_CALLS
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if self.max_tool_calls < 1 or self.timeout_s <= 0:
            raise ValueError("limits must be positive")


# An in-process agent receives the case_start body, yields tool_call bodies
# ({"tool", "parameters"}), is sent tool_result bodies and returns the report body.
AgentGenerator = Generator[dict, dict, dict]
InProcessAgent = Callable[[dict], AgentGenerator]
AgentSpec = Union[Sequence[str], InProcessAgent]

_TIMEOUT = object()


class _ProcessChannel:
    def __init__(self, argv: Sequence[str]):
        self.proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                     text=True, encoding="utf-8", bufsize=1)
        self.lines: queue.Queue = queue.Queue()
        self.stderr: list[str] = []
        threading.Thread(target=self._pump, args=(self.proc.stdout, self.lines), daemon=True).start()
        threading.Thread(target=self._drain, daemon=True).start()

    @staticmethod
    def _pump(stream, q: queue.Queue) -> None:
        for line in stream:
            q.put(line)
        q.put(None)

    def _drain(self) -> None:
        for line in self.proc.stderr:
            self.stderr.append(line)

    def send(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass  # the reader sees EOF next

    def recv(self, timeout: float):
        try:
            return self.lines.get(timeout=max(timeout, 0.0))
        except queue.Empty:
            return _TIMEOUT

    def close(self) -> tuple[int | None, str]:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        return self.proc.returncode, "".join(self.stderr)[-STDERR_TAIL:]

    def exit_code(self) -> int | None:
        try:
            return self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            return None


class _InProcessChannel:
    """Drives a generator agent through the same JSON encoding as a real process."""

    def __init__(self, agent: InProcessAgent):
        self.agent = agent
        self.gen: AgentGenerator | None = None
        self.outbox: list[str | None] = []
        self.code: int | None = None
        self.err = ""
        self.next_id = 0

    def _emit_call(self, body: dict) -> None:
        self.next_id += 1
        body = {"call_id": body.get("call_id", f"c{self.next_id:03d}"), **body}
        self.outbox.append(encode(MessageType.TOOL_CALL, body))

    def _step(self, fn) -> None:
        try:
            self._emit_call(fn())
        except StopIteration as stop:
            self.outbox.append(encode(MessageType.FINAL_REPORT, {"report": stop.value}))
            self.outbox.append(None)
            self.code = 0
        except Exception as exc:  # agent bug: behave like a crashed process
            self.outbox.append(None)
            self.code, self.err = 1, f"{type(exc).__name__}: {exc}"

    def send(self, line: str) -> None:
        kind, body = decode(line)
        if kind is MessageType.CASE_START:
            self.gen = self.agent(body)
            self._step(lambda: next(self.gen))
        elif kind is MessageType.TOOL_RESULT and self.gen is not None:
            self._step(lambda: self.gen.send(body))

    def recv(self, timeout: float):
        return self.outbox.pop(0) if self.outbox else None

    def close(self) -> tuple[int | None, str]:
        if self.gen is not None:
            self.gen.close()
        return self.code, self.err

    def exit_code(self) -> int | None:
        return self.code


def case_start_body(bundle: CaseBundle, limits: Limits) -> dict:
    return {
        "case_id": bundle.case_id,
        "alert": bundle.alert.to_dict(),
        "tools": catalog_schema(),
        "limits": {"max_tool_calls": limits.max_tool_calls, "timeout_s": limits.timeout_s},
    }


def run_session(bundle: CaseBundle, agent: AgentSpec, limits: Limits = Limits()) -> tuple[InvestigationReport, SessionTranscript]:
    """Run ``agent`` on ``bundle``.  Never raises for agent misbehaviour; the transcript records it."""
    channel = _InProcessChannel(agent) if callable(agent) else _ProcessChannel(agent)
    transcript = SessionTranscript(bundle.case_id)
    report: InvestigationReport | None = None
    seen_ids: set[str] = set()
    t0 = time.monotonic()
    deadline = t0 + limits.timeout_s
    try:
        channel.send(encode(MessageType.CASE_START, case_start_body(bundle, limits)))
        while True:
            line = channel.recv(deadline - time.monotonic())
            if line is _TIMEOUT:
                transcript.status, transcript.limit_breached = SessionStatus.NO_REPORT, "timeout"
                transcript.error = f"no final report within {limits.timeout_s:g} s"
                break
            if line is None:
                code = channel.exit_code()
                _, err = channel.close()
                if code:
                    transcript.status = SessionStatus.CRASHED
                    transcript.error = f"agent exited with code {code}" + (f": {err.strip()}" if err.strip() else "")
                else:
                    transcript.status, transcript.error = SessionStatus.NO_REPORT, "agent exited without a final report"
                break
            kind, body = decode(line)
            if kind is MessageType.TOOL_CALL:
                call = parse_tool_call(body)
                if call.call_id in seen_ids:
                    raise ProtocolError(f"duplicate call_id {call.call_id!r}")
                if transcript.call_count >= limits.max_tool_calls:
                    transcript.status, transcript.limit_breached = SessionStatus.NO_REPORT, "max_tool_calls"
                    transcript.error = f"tool-call limit of {limits.max_tool_calls} exceeded"
                    break
                seen_ids.add(call.call_id)
                result = answer_tool_call(bundle, call)
                transcript.entries.append(TranscriptEntry(call, result))
                transcript.call_count += 1
                channel.send(encode(MessageType.TOOL_RESULT, _result_body(result)))
            elif kind is MessageType.FINAL_REPORT:
                report = InvestigationReport.from_dict(body.get("report"))
                if report.case_id != bundle.case_id:
                    raise ProtocolError(f"report is for case {report.case_id!r}, expected {bundle.case_id!r}")
                transcript.status = SessionStatus.COMPLETED
                break
            else:
                raise ProtocolError(f"agents may not send {kind.value} messages")
    except ProtocolError as exc:
        transcript.status, transcript.error = SessionStatus.CRASHED, f"protocol error: {exc}"
        report = None
    finally:
        channel.close()
        transcript.wall_time_s = round(time.monotonic() - t0, 3)
    return report or InvestigationReport.no_report(bundle.case_id), transcript


def _result_body(r: ToolResult) -> dict:
    return {"call_id": r.call_id, "payload": r.payload, "error": r.error}


def replay(bundle: CaseBundle, transcript: SessionTranscript) -> list[ToolResult]:
    """Re-answer every recorded call; equal to the recorded results when tools are pure."""
    return [answer_tool_call(bundle, e.call) for e in transcript.entries]


def write_json_atomic(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
