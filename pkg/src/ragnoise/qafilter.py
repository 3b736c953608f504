"""Rule-based Q&A quality filters (context dependence, best-of-N answer
voting, multi-page validity) plus an optional endpoint-backed LLM judge."""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .docmodel import QARecord
from .generation import GenConfig, extract_response, generate, load_asset
from .metrics import answer_f1, normalize_answer


class EmptyResponses(ValueError):
    pass


AMBIGUOUS_PRONOUNS = ("he", "she", "it", "they", "this", "that")
CONTEXT_PHRASES = ("in the document", "according to the document")

# Words that cannot by themselves anchor a question to an entity.
_FUNCTION_WORDS = frozenset("""
a an the and or but nor not no yes if then than so such as by of in on at to
for from with within without about into onto over under between among through
is are was were be been being am do does did done have has had having can
could will would shall should may might must what which who whom whose when
where why how it its he him his she her hers they them their theirs this that
these those there here i we us our you your me my mine one ones thing things
something someone say says said mean means meant according document page
paper report also more most much many very only just any some all each
""".split())

_PRONOUN_RE = re.compile(r"\b(" + "|".join(AMBIGUOUS_PRONOUNS) + r")\b", re.IGNORECASE)
_QUOTED_RE = re.compile(r"\"[^\"]+\"|'[^']{2,}'|“[^”]+”")
_CAPITALIZED_RUN_RE = re.compile(r"(?<![.!?]\s)(?<!^)\b[A-Z][\w-]*(?:\s+[A-Z][\w-]*)*")
_NUMBER_RE = re.compile(r"\d")


@dataclass(frozen=True)
class FilterResult:
    passed: bool
    reasons: tuple[str, ...] = ()


def _has_entity(question: str) -> bool:
    if _QUOTED_RE.search(question) or _NUMBER_RE.search(question):
        return True
    if _CAPITALIZED_RUN_RE.search(question):
        return True
    words = re.findall(r"[A-Za-z][\w-]*", question)
    return any(w.lower() not in _FUNCTION_WORDS for w in words)


def context_dependence_check(qa: QARecord | str) -> FilterResult:
    """Heuristic screen for questions that cannot stand alone: no nameable
    entity, too many ambiguous pronouns, or document-referential phrasing."""
    question = qa.question if isinstance(qa, QARecord) else qa
    reasons = []
    if not _has_entity(question):
        reasons.append("no explicit entity name")
    pronouns = _PRONOUN_RE.findall(question)
    if len(pronouns) > 1:
        reasons.append(f"ambiguous pronouns: {len(pronouns)}")
    lowered = question.lower()
    for phrase in CONTEXT_PHRASES:
        if phrase in lowered:
            reasons.append(f"document-referential phrase: {phrase!r}")
    return FilterResult(passed=not reasons, reasons=tuple(reasons))


def correctness_vote(qa: QARecord, responses: Sequence[str], threshold: int = 3) -> bool:
    """Best-of-N acceptance: the plurality answer must match a gold answer and
    at least ``threshold`` responses must be correct. Ties fail closed."""
    if not responses:
        raise EmptyResponses("correctness_vote needs at least one response")
    correct = [answer_f1(r, list(qa.answers)) == 1.0 for r in responses]
    n_correct = sum(correct)
    if n_correct < threshold:
        return False
    groups = Counter(normalize_answer(r) for r in responses)
    ranked = groups.most_common()
    top_count = ranked[0][1]
    leaders = [answer for answer, count in ranked if count == top_count]
    if len(leaders) > 1:
        return False
    plurality = leaders[0]
    return any(c and normalize_answer(r) == plurality for r, c in zip(responses, correct))


def multipage_validity(qa: QARecord, responses_no_ctx: Sequence[str],
                       responses_ctx_a: Sequence[str],
                       responses_ctx_b: Sequence[str]) -> bool:
    """Keep a multi-page/reading-order QA only when neither no-context nor
    either single context alone ever produced a correct answer."""
    golds = list(qa.answers)
    for responses in (responses_no_ctx, responses_ctx_a, responses_ctx_b):
        if any(answer_f1(r, golds) == 1.0 for r in responses):
            return False
    return True


# --- endpoint-backed judging --------------------------------------------------

def parse_verdict(raw: str) -> bool | None:
    """Single-token pass/fail verdict; None when the response is neither."""
    tokens = extract_response(raw).strip().lower().split()
    if not tokens:
        return None
    if tokens[0] in ("pass", "passed"):
        return True
    if tokens[0] in ("fail", "failed"):
        return False
    return None


def llm_judge_qa(qa: QARecord, cfg: GenConfig, task_description: str = "") -> bool:
    """Run the shipped verification prompt against an endpoint; non-verdict
    responses fail closed."""
    asset = load_asset("qa_verification")
    system = asset.system.replace("{detailed_task_description}", task_description)
    user = asset.user.replace("{qas}", json.dumps({
        "question": qa.question,
        "answers": list(qa.answers),
        "evidence": qa.evidence,
        "task": qa.task,
    }, ensure_ascii=False))
    verdict = parse_verdict(generate(cfg, (system, user)).text)
    if verdict is None:
        warnings.warn(f"{qa.qa_id}: unparseable judge verdict, failing closed")
        return False
    return verdict


@dataclass
class FilterReport:
    total: int = 0
    passed: int = 0
    failed: int = 0
    reason_counts: dict = field(default_factory=dict)
    per_qa: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total, "passed": self.passed, "failed": self.failed,
            "reason_counts": dict(sorted(self.reason_counts.items())),
            "per_qa": self.per_qa,
        }


def filter_qas(qas: Sequence[QARecord]) -> tuple[list[QARecord], FilterReport]:
    """Apply the pure heuristic filters; returns (kept, report)."""
    report = FilterReport(total=len(qas))
    kept = []
    for qa in qas:
        result = context_dependence_check(qa)
        report.per_qa.append({
            "qa_id": qa.qa_id, "passed": result.passed, "reasons": list(result.reasons),
        })
        if result.passed:
            report.passed += 1
            kept.append(qa)
        else:
            report.failed += 1
            for reason in result.reasons:
                key = reason.split(":")[0]
                report.reason_counts[key] = report.reason_counts.get(key, 0) + 1
    return kept, report
