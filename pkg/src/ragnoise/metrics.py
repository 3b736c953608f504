"""Measurement core: normalized edit distance, evidence-inclusion LCS,
token-level answer F1, and the perturbation quantifier over a QA set.

Edit distance uses Myers' bit-parallel algorithm and LCS length the
Allison-Dix bit-vector recurrence; Python's arbitrary-precision ints act as
the bit vectors, so both are exact for any length and run in
O(|b| * |a|/word) time with linear memory.
"""

from __future__ import annotations

import re
import string
from collections import Counter, defaultdict
from typing import Mapping, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .docmodel import QARecord
    from .fmtnoise import FmtPlan


class MetricError(ValueError):
    pass


class EmptyGroundTruth(MetricError):
    def __init__(self) -> None:
        super().__init__("ground truth must be non-empty")


class EmptyEvidence(MetricError):
    def __init__(self) -> None:
        super().__init__("evidence must be non-empty")


class MissingPage(MetricError):
    def __init__(self, key: tuple[str, int]):
        super().__init__(f"no perturbed page for {key[0]!r} page {key[1]}")
        self.key = key


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Exact Levenshtein distance (Myers 1999, arbitrary pattern length)."""
    if len(a) > len(b):
        a, b = b, a
    m = len(a)
    if m == 0:
        return len(b)
    peq: dict = defaultdict(int)
    for i, c in enumerate(a):
        peq[c] |= 1 << i
    mask = (1 << m) - 1
    high = 1 << (m - 1)
    pv = mask
    mv = 0
    score = m
    for c in b:
        eq = peq.get(c, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (mask ^ (xh | pv))
        mh = pv & xh
        if ph & high:
            score += 1
        if mh & high:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (mask ^ (xv | ph))
        mv = ph & xv
    return score


def edit_distance_norm(pred: str, gt: str) -> float:
    """Levenshtein(pred, gt) / max(|pred|, |gt|), in [0, 1]."""
    if not gt:
        raise EmptyGroundTruth()
    if pred == gt:
        return 0.0
    dist = levenshtein(pred, gt)
    return min(1.0, max(0.0, dist / max(len(pred), len(gt))))


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence (Allison-Dix bit vectors)."""
    if not a or not b:
        return 0
    n = len(a)
    mask = (1 << n) - 1
    pm: dict = defaultdict(int)
    for i, c in enumerate(a):
        pm[c] |= 1 << i
    v = mask
    for c in b:
        m = pm.get(c, 0)
        u = v & m
        v = ((v + u) | (v & (mask ^ m))) & mask
    return n - bin(v).count("1")


def _as_units(text: str, unit: str) -> Sequence:
    if unit == "char":
        return text
    if unit == "token":
        return text.split()
    raise MetricError(f"unknown unit {unit!r}")


def lcs_score(evidence: str, retrieved: str, unit: str = "char") -> float:
    """|LCS(evidence, retrieved)| / |evidence|; 1.0 when the evidence is a
    subsequence of the retrieved text."""
    ev = _as_units(evidence, unit)
    if not ev:
        raise EmptyEvidence()
    got = _as_units(retrieved, unit)
    return min(1.0, lcs_length(ev, got) / len(ev))


def lcs_score_fmt_aware(
    evidence: str,
    retrieved: str,
    plan: "FmtPlan | None" = None,
    unit: str = "char",
) -> float:
    """Evidence inclusion with injected stylistic commands excluded.

    Both sides go through the same normalization so that evidence excerpts
    containing formula delimiters or substitutable symbols still score 1.0
    against a page that only differs by formatting noise.
    """
    from .fmtnoise import strip_formatting

    rules = plan.rules if plan is not None else None
    return lcs_score(
        strip_formatting(evidence, rules=rules),
        strip_formatting(retrieved, rules=rules),
        unit=unit,
    )


_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def answer_f1(pred: str, golds: Sequence[str]) -> float:
    """Max token-level F1 of the prediction over the gold answers."""
    if not golds:
        raise MetricError("golds must be non-empty")
    pred_tokens = normalize_answer(pred).split()
    return max(_f1_single(pred_tokens, normalize_answer(g).split()) for g in golds)


AFFECTED_LCS_THRESHOLD = 0.95


def qa_page_text(qa: "QARecord", pages: Mapping[tuple[str, int], str]) -> str:
    """Perturbed structured data backing a QA; multipage QAs concatenate."""
    parts = []
    for key in qa.pages:
        if key not in pages:
            raise MissingPage(key)
        parts.append(pages[key])
    return "\n".join(parts)


def is_affected(qa: "QARecord", pages: Mapping[tuple[str, int], str]) -> bool:
    return lcs_score(qa.evidence, qa_page_text(qa, pages)) <= AFFECTED_LCS_THRESHOLD


def r_noise(qas: Sequence["QARecord"], pages: Mapping[tuple[str, int], str]) -> float:
    """Fraction of QA pairs whose evidence LCS against the perturbed page
    drops to 0.95 or below; 0.0 on ground-truth pages."""
    if not qas:
        raise MetricError("qas must be non-empty")
    affected = sum(1 for qa in qas if is_affected(qa, pages))
    return affected / len(qas)
