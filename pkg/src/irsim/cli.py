"""Command-line entry point: generate, run, evaluate, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .core import IrsimError
from .evaluator.metrics import DEFAULT_BETA, DEFAULT_TAU, DEFAULT_THRESHOLDS, load_expected_tools
from .evaluator.scoring import ValidationMode, aggregate, case_scores_json, render, score_case, summary_from_json
from .harness.agents import REFERENCE_AGENTS, make_agent
from .harness.protocol import InvestigationReport, SessionStatus, SessionTranscript
from .harness.session import DEFAULT_MAX_TOOL_CALLS, DEFAULT_TIMEOUT_S, Limits, run_session, write_json_atomic
from .scenario import CaseBundle
from .seeds import default_seeds
from .variation import DistributionConfig, build_benchmark

log = logging.getLogger("irsim")

ENV_MAX_TOOL_CALLS = "IRSIM_MAX_TOOL_CALLS"
ENV_TIMEOUT = "IRSIM_TIMEOUT"


def _case_dirs(corpus: Path) -> list[Path]:
    root = corpus / "cases" if (corpus / "cases").is_dir() else corpus
    return sorted(p for p in root.iterdir() if (p / "case.json").is_file()) if root.is_dir() else []


# --- generate --------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    config = DistributionConfig.load(args.config) if args.config else DistributionConfig()
    if args.compression is not None:
        config.compression = args.compression

    def progress(done: int, total: int) -> None:
        if done % 100 == 0 or done == total:
            log.info("generated %d/%d cases", done, total)

    bench = build_benchmark(config, default_seeds(), args.seed, progress)
    root = bench.write(args.out)
    gen = bench.report["generation"]
    print(f"wrote {len(bench.cases)} cases to {root / 'cases'} "
          f"({gen['rejected']} candidates rejected of {gen['attempts']})")
    return 0


# --- run -------------------------------------------------------------------------------


def _agent_spec(text: str, corpus: Path, seed: int):
    if text in REFERENCE_AGENTS:
        return make_agent(text, corpus, seed)
    argv = shlex.split(text)
    if not argv:
        raise IrsimError("empty agent command")
    return argv


def _limits(args: argparse.Namespace) -> Limits:
    calls = args.max_tool_calls if args.max_tool_calls is not None else int(os.environ.get(ENV_MAX_TOOL_CALLS, DEFAULT_MAX_TOOL_CALLS))
    timeout = args.timeout if args.timeout is not None else float(os.environ.get(ENV_TIMEOUT, DEFAULT_TIMEOUT_S))
    return Limits(calls, timeout)


def cmd_run(args: argparse.Namespace) -> int:
    corpus = Path(args.corpus)
    dirs = _case_dirs(corpus)
    if not dirs:
        log.error("no cases found under %s", corpus)
        return 2
    agent = _agent_spec(args.agent, corpus, args.seed)
    limits = _limits(args)
    out = Path(args.out) / "reports"

    def one(case_dir: Path) -> tuple[str, str, str | None]:
        bundle = CaseBundle.read(case_dir, with_ground_truth=False)
        report, transcript = run_session(bundle, agent, limits)
        dest = out / bundle.case_id
        write_json_atomic(dest / "transcript.json", transcript.to_dict())
        if transcript.status is SessionStatus.CRASHED:
            (dest / "report.json").unlink(missing_ok=True)
        else:
            write_json_atomic(dest / "report.json", report.to_dict())
        return bundle.case_id, transcript.status.value, transcript.error

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(one, dirs))
    failures = [{"case_id": c, "status": s, "error": e} for c, s, e in results if s != SessionStatus.COMPLETED.value]
    write_json_atomic(Path(args.out) / "run.json", {
        "agent": args.agent, "cases": len(results), "limits": {"max_tool_calls": limits.max_tool_calls, "timeout_s": limits.timeout_s},
        "failures": failures})
    for f in failures:
        log.warning("%s: %s (%s)", f["case_id"], f["status"], f["error"])
    print(f"ran {len(results)} cases: {len(results) - len(failures)} completed, {len(failures)} without a report")
    return 0


# --- evaluate --------------------------------------------------------------------------


def _load_outputs(reports_root: Path, case_id: str) -> tuple[InvestigationReport | None, SessionTranscript | None]:
    d = reports_root / case_id
    report = transcript = None
    if (d / "transcript.json").is_file():
        transcript = SessionTranscript.from_dict(json.loads((d / "transcript.json").read_text(encoding="utf-8")))
    if (d / "report.json").is_file():
        report = InvestigationReport.from_dict(json.loads((d / "report.json").read_text(encoding="utf-8")))
    return report, transcript


def cmd_evaluate(args: argparse.Namespace) -> int:
    corpus = Path(args.corpus)
    dirs = _case_dirs(corpus)
    if not dirs:
        log.error("no cases found under %s", corpus)
        return 2
    reports = Path(args.reports)
    reports_root = reports / "reports" if (reports / "reports").is_dir() else reports
    expected = load_expected_tools(args.expected_tools) if args.expected_tools else None
    thresholds = sorted({int(x) for x in args.thresholds.split(",") if x.strip()})
    scores, missing = [], []
    for d in dirs:
        bundle = CaseBundle.read(d)
        report, transcript = _load_outputs(reports_root, bundle.case_id)
        if report is None and transcript is None:
            missing.append(bundle.case_id)
        scores.append(score_case(bundle, report, transcript, tau=args.tau, expected_tools=expected, k_min=args.k_min))
    if missing:
        log.warning("%d case(s) have no report and are scored as no-report: %s", len(missing), ", ".join(missing))
    mode = ValidationMode.VALIDATED if args.validated else ValidationMode.RAW
    summary = aggregate(scores, mode, beta=args.beta, tau=args.tau, thresholds=thresholds)
    out = Path(args.out) / "summary"
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    (out / "cases.json").write_text(case_scores_json(scores), encoding="utf-8")
    for name, text in render(summary).items():
        (out / name).write_text(text, encoding="utf-8")
    print(render(summary)["triage.md"], end="")
    print(f"summary written to {out}")
    return 0


# --- report ----------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.summary)
    if path.is_dir():
        path = path / "summary" / "summary.json" if (path / "summary").is_dir() else path / "summary.json"
    summary = summary_from_json(path.read_text(encoding="utf-8"))
    tables = render(summary)
    ext = "md" if args.format == "markdown" else "csv"
    for name in ("triage", "depth"):
        print(tables[f"{name}.{ext}"])
    return 0


# --- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irsim", description="Cloud incident-response benchmark: generate, run, score.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a corpus of case bundles")
    g.add_argument("config", nargs="?", help="distribution config (JSON); default composition when omitted")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--compression", help="timeline compression factor, e.g. 1 or 1/60")
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("run", help="run an agent over a corpus")
    r.add_argument("--corpus", required=True)
    r.add_argument("--agent", required=True,
                   help=f"agent command line, or a reference agent: {', '.join(REFERENCE_AGENTS)}")
    r.add_argument("--out", required=True)
    r.add_argument("--max-tool-calls", type=int, help=f"default {DEFAULT_MAX_TOOL_CALLS} (env {ENV_MAX_TOOL_CALLS})")
    r.add_argument("--timeout", type=float, help=f"seconds per case, default {DEFAULT_TIMEOUT_S:g} (env {ENV_TIMEOUT})")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int, default=0, help="seed for the random reference agent")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("evaluate", help="score reports against ground truth")
    e.add_argument("--corpus", required=True)
    e.add_argument("--reports", required=True, help="output directory of `run`")
    e.add_argument("--out", required=True)
    e.add_argument("--beta", type=float, default=DEFAULT_BETA)
    e.add_argument("--tau", type=float, default=DEFAULT_TAU)
    e.add_argument("--thresholds", default=",".join(map(str, DEFAULT_THRESHOLDS)), help="comma-separated N values")
    e.add_argument("--validated", action="store_true", help="treat evidence-downgraded TP verdicts as FP")
    e.add_argument("--k-min", type=int, default=1, help="evidenced claims needed to uphold a TP verdict")
    e.add_argument("--expected-tools", help="JSON table of expected tools per category")
    e.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="render tables from a summary")
    p.add_argument("summary", help="summary.json or an evaluate output directory")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.fn(args)
    except (IrsimError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
