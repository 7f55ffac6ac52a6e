"""A minimal external agent that speaks the JSONL stdio protocol.

It pulls the first page of CloudTrail events around the alert, flags
console logins and access-key creations from outside 10/8, and answers TP
if anything was flagged.  Run it through the harness with:

    irsim run --corpus out/corpus --agent "python demos/stdio_agent.py" --out out/stdio
"""

from __future__ import annotations

import json
import sys

SUSPICIOUS = {"ConsoleLogin", "CreateAccessKey", "PutBucketPolicy", "AssumeRole"}


def send(msg: dict) -> None:
    print(json.dumps(msg), flush=True)


def receive() -> dict:
    line = sys.stdin.readline()
    if not line:
        sys.exit(0)
    return json.loads(line)


def main() -> None:
    start = receive()
    assert start["type"] == "case_start"
    send({"type": "tool_call", "call_id": "c1", "tool": "lookup_events", "parameters": {"max_results": 50}})
    result = receive()
    events = (result.get("payload") or {}).get("events", [])
    flagged = [e for e in events
               if e["event_name"] in SUSPICIOUS and not (e.get("source_ip") or "").startswith("10.")]
    claims = [{"statement": f"{e['event_name']} from {e.get('source_ip')}",
               "evidence_refs": [{"kind": "event_id", "value": e["event_id"]}]} for e in flagged[:10]]
    report = {"case_id": start["case_id"], "verdict": "TP" if flagged else "FP", "claims": claims}
    send({"type": "final_report", "report": report})


if __name__ == "__main__":
    main()
