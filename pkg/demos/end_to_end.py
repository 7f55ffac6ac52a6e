"""Generate a small corpus, run two agents over it, and print the triage table.

    python demos/end_to_end.py [WORKDIR]
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from irsim.core import Category
from irsim.evaluator.scoring import aggregate, render, score_case
from irsim.harness.agents import make_agent
from irsim.harness.session import Limits, run_session
from irsim.scenario import read_corpus
from irsim.seeds import default_seeds
from irsim.variation import DistributionConfig, build_benchmark

CONFIG = {"categories": {c.value: {"tp": 4, "fp": 3} for c in Category}}


def cautious_agent(start: dict):
    """An in-process agent: read the whole event window, call TP if any error-coded event shows up."""
    events, token = [], None
    while True:
        params = {"max_results": 50, **({"next_token": token} if token else {})}
        page = (yield {"tool": "lookup_events", "parameters": params})["payload"]
        events += page["events"]
        token = page["next_token"]
        if not token:
            break
    failures = [e for e in events if e.get("error_code")]
    claims = [{"statement": f"{e['event_name']} failed with {e['error_code']} from {e.get('source_ip')}",
               "evidence_refs": [{"kind": "event_id", "value": e["event_id"]}]} for e in failures[:5]]
    return {"case_id": start["case_id"], "verdict": "TP" if failures else "FP", "claims": claims}


def main(workdir: Path) -> None:
    bench = build_benchmark(DistributionConfig.from_dict(CONFIG), default_seeds(), rng_seed=11)
    bench.write(workdir / "corpus")
    cases = list(read_corpus(workdir / "corpus"))
    print(f"generated {len(cases)} cases under {workdir / 'corpus'}\n")
    for name, agent in (("keyword", make_agent("keyword")), ("cautious", cautious_agent)):
        scores = []
        for bundle in cases:
            report, transcript = run_session(bundle, agent, Limits(max_tool_calls=50))
            scores.append(score_case(bundle, report, transcript))
        print(f"## {name}\n")
        print(render(aggregate(scores))["triage.md"])


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
