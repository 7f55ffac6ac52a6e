"""Triage (M1), investigation depth (M2) and tool coverage (M3) scoring."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..core import Category, Verdict
from ..scenario import GroundTruth
from .rouge import rouge_l, tokenize

DEFAULT_TAU = 0.42
DEFAULT_BETA = 3.0
DEFAULT_THRESHOLDS = (3, 5, 7)

_BASE_TOOLS = ("lookup_events", "get_cost_and_usage")
DEFAULT_EXPECTED_TOOLS: dict[Category, tuple[str, ...]] = {
    Category.BRUTE_FORCE: _BASE_TOOLS + ("list_users", "get_user"),
    Category.UNAUTHORIZED_ACCESS: _BASE_TOOLS + ("list_roles", "get_role", "list_buckets"),
    Category.MISCONFIGURATION: _BASE_TOOLS + ("list_buckets", "get_bucket_policy", "describe_security_groups"),
    Category.MALICIOUS_FILE_EXECUTION: _BASE_TOOLS + ("describe_instances", "describe_security_groups"),
}


def load_expected_tools(path: str | Path) -> dict[Category, tuple[str, ...]]:
    """Read a ``{category: [tool, ...]}`` JSON table; unlisted categories keep the defaults."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    table = dict(DEFAULT_EXPECTED_TOOLS)
    for key, tools in data.items():
        table[Category(key)] = tuple(tools)
    return table


# --- M1 ---------------------------------------------------------------------------


@dataclass(frozen=True)
class M1:
    m1_tp: float | None  # None: no true-positive cases, rate undefined
    m1_fp: float | None
    tp_detected: int = 0
    tp_total: int = 0
    fp_rejected: int = 0
    fp_total: int = 0


def score_m1(results: Iterable[tuple[Verdict, Verdict]]) -> M1:
    """``results`` are (predicted, actual) pairs."""
    tp_hit = tp_n = fp_hit = fp_n = 0
    for y, y_star in results:
        y, y_star = Verdict(y), Verdict(y_star)
        if y_star is Verdict.TP:
            tp_n += 1
            tp_hit += y is Verdict.TP
        else:
            fp_n += 1
            fp_hit += y is Verdict.FP
    return M1(tp_hit / tp_n if tp_n else None, fp_hit / fp_n if fp_n else None, tp_hit, tp_n, fp_hit, fp_n)


def f_beta(m1_tp: float, m1_fp: float, beta: float = DEFAULT_BETA) -> float:
    """Weighted harmonic mean with ``m1_tp`` as the recall-like term (weighted by beta squared).

    The denominator is ``beta**2 * m1_fp + m1_tp``, the standard form.  Swapping
    the two terms would weight the false-positive rate instead.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    b2 = beta * beta
    denom = b2 * m1_fp + m1_tp
    if denom == 0:
        return 0.0
    return (1 + b2) * m1_tp * m1_fp / denom


# --- M2 ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FindingMatch:
    finding_id: str
    matched: bool
    best_claim: int | None  # index into the claims, None when there are none
    best_score: float


def match_findings(claims: Sequence[str], ground_truth: GroundTruth, tau: float = DEFAULT_TAU) -> list[FindingMatch]:
    """Best ROUGE-L claim per ground-truth finding; matched iff the score exceeds ``tau``.

    One claim may match several findings.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must be in (0, 1)")
    claim_tokens = [tokenize(c) for c in claims]
    out = []
    for f in ground_truth.findings:
        ref = tokenize(f.statement)
        best, best_i = 0.0, None
        for i, cand in enumerate(claim_tokens):
            s = rouge_l(ref, cand)
            if best_i is None or s > best:
                best, best_i = s, i
        out.append(FindingMatch(f.finding_id, best > tau, best_i, best))
    return out


@dataclass(frozen=True)
class M2:
    m2_recall: float | None  # None when the case has no findings
    m2_novel_recall: float | None  # None when the case has no novel findings
    novel_found_count: int
    novel_total: int


def score_m2(claims: Sequence[str], ground_truth: GroundTruth, tau: float = DEFAULT_TAU) -> M2:
    matches = match_findings(claims, ground_truth, tau)
    novel = set(ground_truth.novel_findings)
    hit = [m for m in matches if m.matched]
    novel_hit = sum(1 for m in hit if m.finding_id in novel)
    n_novel = sum(1 for m in matches if m.finding_id in novel)
    return M2(len(hit) / len(matches) if matches else None,
              novel_hit / n_novel if n_novel else None, novel_hit, n_novel)


def m2_threshold(novel_counts: Sequence[int], n: int) -> float | None:
    """Share of cases with at least ``n`` matched novel findings (TP cases only should be passed)."""
    if n < 0:
        raise ValueError("N must be non-negative")
    if not novel_counts:
        return None
    return sum(1 for c in novel_counts if c >= n) / len(novel_counts)


# --- M3 ---------------------------------------------------------------------------


def score_m3(tools_invoked: Iterable[str], category: Category | str,
             expected: dict[Category, tuple[str, ...]] | None = None) -> float:
    table = expected or DEFAULT_EXPECTED_TOOLS
    try:
        want = set(table[Category(category)])
    except (KeyError, ValueError):
        raise ValueError(f"no expected-tool table for category {category!r}") from None
    if not want:
        raise ValueError(f"expected-tool table for {category!r} is empty")
    return len(want & set(tools_invoked)) / len(want)


# --- per-case score ------------------------------------------------------------------


class EvidenceOutcome(str, enum.Enum):
    UPHELD = "upheld"
    DOWNGRADED = "downgraded"
    NOT_APPLICABLE = "not_applicable"


@dataclass
class CaseScore:
    case_id: str
    category: Category
    predicted: Verdict  # as reported (crashes already mapped to the wrong verdict)
    actual: Verdict
    m2_recall: float | None = None
    m2_novel_recall: float | None = None
    novel_found_count: int = 0
    novel_total: int = 0
    m3_coverage: float | None = None
    evidence_validation: EvidenceOutcome = EvidenceOutcome.NOT_APPLICABLE
    downgrade_reason: str | None = None
    status: str = "completed"
    scorable: bool = True  # False after a crash: excluded from M2 and M3
    matches: list[FindingMatch] = field(default_factory=list)

    def verdict(self, validated: bool) -> Verdict:
        if validated and self.evidence_validation is EvidenceOutcome.DOWNGRADED:
            return Verdict.FP
        return self.predicted
