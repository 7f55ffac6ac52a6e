"""Tokenization and ROUGE-L (LCS-based F1) for finding statements."""

from __future__ import annotations

import string
from typing import Sequence

_STRIP = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation from token edges.

    Punctuation inside a token is kept, so ARNs, IPs, event names and paths such
    as ``arn:aws:iam::123456789012:role/admin`` survive as single tokens.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(reference: Sequence[str], candidate: Sequence[str]) -> float:
    """ROUGE-L F1: harmonic mean of LCS precision and recall; 0.0 if either side is empty.

    Computed as ``2L / (|ref| + |cand|)``, which equals ``2PR / (P + R)`` and
    avoids rounding drift at threshold boundaries.
    """
    if not reference or not candidate:
        return 0.0
    return 2 * lcs_length(reference, candidate) / (len(reference) + len(candidate))


def text_similarity(a: str, b: str) -> float:
    return rouge_l(tokenize(a), tokenize(b))
