"""Per-case scoring, corpus aggregation and table rendering."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Sequence

from ..core import CATEGORY_LABELS, CATEGORY_ORDER, Category, Verdict, structure, unstructure
from ..harness.protocol import InvestigationReport, SessionStatus, SessionTranscript
from ..scenario import CaseBundle
from .metrics import (
    DEFAULT_BETA,
    DEFAULT_TAU,
    DEFAULT_THRESHOLDS,
    CaseScore,
    EvidenceOutcome,
    f_beta,
    m2_threshold,
    match_findings,
    score_m1,
    score_m2,
    score_m3,
)
from .validation import validate_evidence

OVERALL = "overall"


class ValidationMode(str, enum.Enum):
    RAW = "raw"
    VALIDATED = "validated"


def _flip(v: Verdict) -> Verdict:
    return Verdict.FP if v is Verdict.TP else Verdict.TP


def score_case(bundle: CaseBundle, report: InvestigationReport | None, transcript: SessionTranscript | None, *,
               tau: float = DEFAULT_TAU, expected_tools=None, k_min: int = 1) -> CaseScore:
    """Score one case.  A missing report counts as FP with no claims; a crash counts as a missed verdict."""
    gt = bundle.ground_truth
    category = bundle.manifest.category
    status = transcript.status if transcript is not None else SessionStatus.NO_REPORT
    if report is None:
        status = SessionStatus.CRASHED if status is SessionStatus.CRASHED else SessionStatus.NO_REPORT
    if status is SessionStatus.CRASHED:
        return CaseScore(bundle.case_id, category, _flip(gt.verdict), gt.verdict, novel_total=len(gt.novel_findings),
                         status=status.value, scorable=False)
    report = report or InvestigationReport.no_report(bundle.case_id)
    m2 = score_m2(report.statements(), gt, tau)
    m3 = score_m3(transcript.tools_invoked() if transcript else [], category, expected_tools)
    ev = validate_evidence(report, bundle, k_min)
    return CaseScore(
        bundle.case_id, category, report.verdict, gt.verdict,
        m2.m2_recall, m2.m2_novel_recall, m2.novel_found_count, m2.novel_total, m3,
        ev.outcome, ev.reason.value if ev.reason else None, status.value, True,
        match_findings(report.statements(), gt, tau),
    )


@dataclass
class SummaryRow:
    n: int
    n_tp: int
    n_fp: int
    m1_tp: float | None
    m1_fp: float | None
    f_beta: float | None
    tp_detected: int
    fp_rejected: int
    avg_novel_kf: float | None
    novel_coverage: float | None
    m2_recall: float | None
    m3_coverage: float | None
    threshold_curve: dict[str, float | None] = field(default_factory=dict)
    downgraded: int = 0
    crashed: int = 0
    no_report: int = 0


@dataclass
class BenchmarkSummary:
    validation_mode: ValidationMode
    beta: float
    tau: float
    thresholds: list[int]
    rows: dict[str, SummaryRow]

    def to_dict(self) -> dict:
        return unstructure(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _mean(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return fmean(vals) if vals else None


def _row(scores: Sequence[CaseScore], validated: bool, beta: float, thresholds: Sequence[int]) -> SummaryRow:
    m1 = score_m1((s.verdict(validated), s.actual) for s in scores)
    fb = f_beta(m1.m1_tp, m1.m1_fp, beta) if m1.m1_tp is not None and m1.m1_fp is not None else None
    tp_scored = [s for s in scores if s.actual is Verdict.TP and s.scorable]
    counts = [s.novel_found_count for s in tp_scored]
    return SummaryRow(
        n=len(scores), n_tp=m1.tp_total, n_fp=m1.fp_total, m1_tp=m1.m1_tp, m1_fp=m1.m1_fp, f_beta=fb,
        tp_detected=m1.tp_detected, fp_rejected=m1.fp_rejected,
        avg_novel_kf=_mean(counts),
        novel_coverage=_mean(s.m2_novel_recall for s in tp_scored),
        m2_recall=_mean(s.m2_recall for s in tp_scored),
        m3_coverage=_mean(s.m3_coverage for s in scores if s.scorable),
        threshold_curve={str(n): m2_threshold(counts, n) for n in thresholds},
        downgraded=sum(1 for s in scores if s.evidence_validation is EvidenceOutcome.DOWNGRADED),
        crashed=sum(1 for s in scores if s.status == SessionStatus.CRASHED.value),
        no_report=sum(1 for s in scores if s.status == SessionStatus.NO_REPORT.value),
    )


def aggregate(scores: Iterable[CaseScore], validation_mode: ValidationMode | str = ValidationMode.RAW, *,
              beta: float = DEFAULT_BETA, tau: float = DEFAULT_TAU,
              thresholds: Sequence[int] = DEFAULT_THRESHOLDS) -> BenchmarkSummary:
    """Per-category and overall rows.  Overall M1 pools counts rather than averaging category rates."""
    mode = ValidationMode(validation_mode)
    validated = mode is ValidationMode.VALIDATED
    ordered = sorted(scores, key=lambda s: s.case_id)
    rows: dict[str, SummaryRow] = {}
    for cat in CATEGORY_ORDER:
        mine = [s for s in ordered if s.category is cat]
        if mine:
            rows[cat.value] = _row(mine, validated, beta, thresholds)
    rows[OVERALL] = _row(ordered, validated, beta, thresholds)
    return BenchmarkSummary(mode, beta, tau, sorted(thresholds), rows)


def case_scores_json(scores: Iterable[CaseScore]) -> str:
    out = []
    for s in sorted(scores, key=lambda s: s.case_id):
        d = unstructure(s)
        d.pop("matches")
        d["matched_findings"] = [m.finding_id for m in s.matches if m.matched]
        out.append(d)
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


# --- rendering -------------------------------------------------------------------------


def _label(key: str) -> str:
    return "Overall" if key == OVERALL else CATEGORY_LABELS[Category(key)]


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}%"


def _num(v: float | None, digits: int = 3) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def _ordered(summary: BenchmarkSummary) -> list[tuple[str, SummaryRow]]:
    keys = [c.value for c in CATEGORY_ORDER if c.value in summary.rows] + [OVERALL]
    return [(k, summary.rows[k]) for k in keys if k in summary.rows]


def triage_table(summary: BenchmarkSummary) -> tuple[list[str], list[list[str]]]:
    head = ["Category", "Cases", "M1 TP", "M1 FP", f"F{summary.beta:g}", "Missed TP", "False alarms", "Downgraded"]
    body = []
    for key, r in _ordered(summary):
        body.append([_label(key), str(r.n), _pct(r.m1_tp), _pct(r.m1_fp), _num(r.f_beta),
                     f"{r.n_tp - r.tp_detected}/{r.n_tp}", f"{r.n_fp - r.fp_rejected}/{r.n_fp}", str(r.downgraded)])
    return head, body


def depth_table(summary: BenchmarkSummary) -> tuple[list[str], list[list[str]]]:
    head = ["Category", "Avg novel KF", "Novel coverage", "M2 recall"] + [f"Hit {n}+" for n in summary.thresholds] + ["M3 coverage"]
    body = []
    for key, r in _ordered(summary):
        body.append([_label(key), _num(r.avg_novel_kf, 2), _pct(r.novel_coverage), _pct(r.m2_recall)]
                    + [_pct(r.threshold_curve.get(str(n))) for n in summary.thresholds] + [_pct(r.m3_coverage)])
    return head, body


def to_markdown(head: list[str], body: list[list[str]]) -> str:
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join("---" for _ in head) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines) + "\n"


def to_csv(head: list[str], body: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(body)
    return buf.getvalue()


def render(summary: BenchmarkSummary) -> dict[str, str]:
    """File name to content for the rendered tables."""
    out = {}
    for name, table in (("triage", triage_table(summary)), ("depth", depth_table(summary))):
        out[f"{name}.md"] = to_markdown(*table)
        out[f"{name}.csv"] = to_csv(*table)
    return out


def summary_from_json(text: str) -> BenchmarkSummary:
    return structure(BenchmarkSummary, json.loads(text))
