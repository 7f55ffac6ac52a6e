"""Evidence validation: a TP verdict stands only on concrete, independently found evidence."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from ..cloud import lookup_resource
from ..core import format_ts, parse_ts
from ..harness.protocol import InvestigationReport
from ..scenario import CaseBundle, EvidenceArtifact, EvidenceKind
from .metrics import EvidenceOutcome


class DowngradeReason(str, enum.Enum):
    NO_EVIDENCE = "no_evidence"
    ALERT_ONLY_EVIDENCE = "alert_only_evidence"
    UNRESOLVABLE_REFS = "unresolvable_refs"


@dataclass(frozen=True)
class ValidationOutcome:
    outcome: EvidenceOutcome
    reason: DowngradeReason | None = None


class EvidenceIndex:
    """What a bundle can vouch for, and which of it the alert already disclosed."""

    def __init__(self, bundle: CaseBundle):
        self.bundle = bundle
        self.event_ids = {e.event_id for e in bundle.log}
        self.arns: set[str] = set()
        for e in bundle.log:
            self.arns.update(e.resources)
            if e.user_identity.arn:
                self.arns.add(e.user_identity.arn)
                self.arns.add(e.user_identity.issuer_arn)
        times = [e.event_time for e in bundle.log]
        self.span = (min(times), max(times)) if times else None
        trigger = set(bundle.alert.triggering_event_ids)
        self.alert_refs: set[tuple[EvidenceKind, str]] = {(EvidenceKind.EVENT_ID, i) for i in trigger}
        for e in bundle.log:
            if e.event_id in trigger:
                self.alert_refs.add((EvidenceKind.TIMESTAMP, format_ts(e.event_time)))
                for arn in (*e.resources, e.user_identity.arn, e.user_identity.issuer_arn):
                    if arn:
                        self.alert_refs.add((EvidenceKind.ARN, arn))

    def resolves(self, ref: EvidenceArtifact) -> bool:
        if ref.kind is EvidenceKind.EVENT_ID:
            return ref.value in self.event_ids
        if ref.kind is EvidenceKind.ARN:
            if ref.value in self.arns:
                return True
            try:
                return lookup_resource(self.bundle.environment, ref.value) is not None
            except ValueError:
                return False
        try:
            t = parse_ts(ref.value)
        except ValueError:
            return False
        return self.span is not None and self.span[0] <= t <= self.span[1]

    def alert_only(self, refs: Iterable[EvidenceArtifact]) -> bool:
        return all((r.kind, r.value) in self.alert_refs for r in refs)


def validate_evidence(report: InvestigationReport, bundle: CaseBundle, k_min: int = 1,
                      index: EvidenceIndex | None = None) -> ValidationOutcome:
    """Uphold a TP verdict only when ``k_min`` claims cite resolvable evidence beyond the alert itself."""
    if k_min < 1:
        raise ValueError("k_min must be positive")
    if report.verdict.value != "TP":
        return ValidationOutcome(EvidenceOutcome.NOT_APPLICABLE)
    idx = index or EvidenceIndex(bundle)
    cited = [c for c in report.claims if c.evidence_refs]
    if not cited:
        return ValidationOutcome(EvidenceOutcome.DOWNGRADED, DowngradeReason.NO_EVIDENCE)
    resolved = [c for c in cited if all(idx.resolves(r) for r in c.evidence_refs)]
    independent = [c for c in resolved if not idx.alert_only(c.evidence_refs)]
    if len(independent) >= k_min:
        return ValidationOutcome(EvidenceOutcome.UPHELD)
    if len(resolved) < k_min and len(resolved) < len(cited):
        return ValidationOutcome(EvidenceOutcome.DOWNGRADED, DowngradeReason.UNRESOLVABLE_REFS)
    return ValidationOutcome(EvidenceOutcome.DOWNGRADED, DowngradeReason.ALERT_ONLY_EVIDENCE)
