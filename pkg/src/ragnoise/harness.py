"""Stage-level evaluation: run retrieval / generation / end-to-end over a
corpus and QA set, aggregate per-source and per-domain metrics, and render
reports. Per-QA failures never abort a run; they are recorded and scored 0."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .docmodel import (
    EVIDENCE_SOURCES,
    QARecord,
    StructuredDoc,
    read_jsonl,
    serialize_doc,
)
from .fmtnoise import FmtPlan
from .generation import (
    GenConfig,
    NonRetryableStatus,
    PromptAsset,
    RequestTimeout,
    generate,
    load_asset,
    render_prompt,
    split_response,
)
from .metrics import answer_f1, is_affected, lcs_score, lcs_score_fmt_aware
from .retrieval import (
    Chunk,
    EmbeddingClient,
    EmptyKnowledgeBase,
    EndpointUnavailable,
    KnowledgeBase,
    RetrievalError,
    RetrievalResult,
    bm25_query,
    chunks_by_id,
    dense_query,
    embed_chunks,
)

STAGE_RETRIEVAL = "retrieval"
STAGE_GENERATION = "generation"
STAGE_E2E = "e2e"

# Top-k chunk texts are concatenated in rank order for evidence-inclusion
# scoring; a newline keeps token boundaries intact.
CHUNK_JOIN = "\n"


class MissingDomainKB(KeyError):
    def __init__(self, domain: str):
        super().__init__(f"no knowledge base for domain {domain!r}")
        self.domain = domain


def config_fingerprint(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class EvalReport:
    stage: str
    overall: float
    by_source: dict[str, float]
    by_domain: dict[str, float]
    config_fingerprint: str
    per_qa: list[dict]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "overall": self.overall,
            "by_source": self.by_source,
            "by_domain": self.by_domain,
            "config_fingerprint": self.config_fingerprint,
            "per_qa": self.per_qa,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EvalReport":
        return cls(
            stage=payload["stage"],
            overall=payload["overall"],
            by_source=dict(payload["by_source"]),
            by_domain=dict(payload["by_domain"]),
            config_fingerprint=payload["config_fingerprint"],
            per_qa=list(payload["per_qa"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def _aggregate(stage: str, qas: Sequence[QARecord], per_qa: list[dict],
               fingerprint: str) -> EvalReport:
    assert len(qas) == len(per_qa)
    overall = sum(e["metric"] for e in per_qa) / len(per_qa) if per_qa else 0.0
    by_source: dict[str, list[float]] = {}
    by_domain: dict[str, list[float]] = {}
    for qa, entry in zip(qas, per_qa):
        by_source.setdefault(qa.evidence_source, []).append(entry["metric"])
        by_domain.setdefault(qa.domain, []).append(entry["metric"])
    return EvalReport(
        stage=stage,
        overall=overall,
        by_source={s: sum(v) / len(v) for s, v in sorted(by_source.items())},
        by_domain={d: sum(v) / len(v) for d, v in sorted(by_domain.items())},
        config_fingerprint=fingerprint,
        per_qa=per_qa,
    )


# --- retrievers ---------------------------------------------------------------

class BM25Retriever:
    name = "bm25"

    def retrieve(self, kb: KnowledgeBase, qa: QARecord, k: int) -> RetrievalResult:
        return bm25_query(kb, qa.question, k=k, query_id=qa.qa_id)


class DenseRetriever:
    name = "dense"

    def __init__(self, client: EmbeddingClient, cache_dir: str | Path | None = None):
        self.client = client
        self.cache_dir = cache_dir
        self._vectors: dict[int, object] = {}

    def retrieve(self, kb: KnowledgeBase, qa: QARecord, k: int) -> RetrievalResult:
        key = id(kb)
        if key not in self._vectors:
            self._vectors[key] = embed_chunks(kb, self.client, cache_dir=self.cache_dir)
        return dense_query(self.client, kb, qa.question, k=k,
                           chunk_vecs=self._vectors[key], query_id=qa.qa_id)


class OracleRetriever:
    """Always returns the chunks of the QA's own page(s), in chunk order.
    Useful for isolating the generation stage inside the e2e pipeline."""

    name = "oracle"

    def retrieve(self, kb: KnowledgeBase, qa: QARecord, k: int) -> RetrievalResult:
        pages = set(qa.pages)
        hits = [(c.chunk_id, 1.0) for c in kb.chunks if (c.doc_id, c.page_no) in pages]
        if not hits:
            raise RetrievalError(f"no chunks for pages {sorted(pages)} of {qa.qa_id}")
        return RetrievalResult(query_id=qa.qa_id, hits=tuple(hits))


# --- evaluation stages ----------------------------------------------------------

def _retrieved_texts(kb: KnowledgeBase, result: RetrievalResult,
                     canonical_order: bool = False) -> list[str]:
    lookup = chunks_by_id(kb)
    ids = result.chunk_ids()
    if canonical_order:
        ids = sorted(ids)
    return [lookup[cid].text for cid in ids]


def eval_retrieval(kbs: Mapping[str, KnowledgeBase], qas: Sequence[QARecord],
                   retriever, k: int = 2, fmt_aware: bool = False,
                   plan: FmtPlan | None = None,
                   config: Mapping | None = None) -> EvalReport:
    """Evidence-inclusion LCS of each QA's evidence against the concatenated
    top-k retrieved chunks, from the KB of the QA's domain."""
    fingerprint = config_fingerprint({
        "stage": STAGE_RETRIEVAL, "k": k, "retriever": retriever.name,
        "fmt_aware": fmt_aware, **(dict(config) if config else {}),
    })
    per_qa = []
    for qa in qas:
        if qa.domain not in kbs:
            raise MissingDomainKB(qa.domain)
        kb = kbs[qa.domain]
        result = retriever.retrieve(kb, qa, k)
        # multi-page evidence spans pages in document order, so its QAs are
        # scored against the union of retrieved chunks in id order rather
        # than rank order
        joined = CHUNK_JOIN.join(
            _retrieved_texts(kb, result, canonical_order=qa.multipage))
        if fmt_aware:
            metric = lcs_score_fmt_aware(qa.evidence, joined, plan)
        else:
            metric = lcs_score(qa.evidence, joined)
        per_qa.append({"qa_id": qa.qa_id, "metric": metric,
                       "retrieved_ids": list(result.chunk_ids())})
    return _aggregate(STAGE_RETRIEVAL, qas, per_qa, fingerprint)


def page_map(docs: Sequence[StructuredDoc]) -> dict[tuple[str, int], StructuredDoc]:
    return {doc.page_key: doc for doc in docs}


_GEN_ERRORS = (EndpointUnavailable, NonRetryableStatus, RequestTimeout, KeyError)


def _run_parallel(worker: Callable[[QARecord], dict], qas: Sequence[QARecord],
                  max_workers: int, checkpoint_path: str | Path | None) -> list[dict]:
    done: dict[str, dict] = {}
    if checkpoint_path and Path(checkpoint_path).exists():
        for row in read_jsonl(checkpoint_path):
            done[row["qa_id"]] = row
    pending = [qa for qa in qas if qa.qa_id not in done]
    if pending:
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(worker, pending))
        else:
            results = [worker(qa) for qa in pending]
        for qa, entry in zip(pending, results):
            done[qa.qa_id] = entry
        if checkpoint_path:
            with open(checkpoint_path, "w", encoding="utf-8") as fh:
                for qa in qas:
                    if qa.qa_id in done:
                        fh.write(json.dumps(done[qa.qa_id], ensure_ascii=False,
                                            sort_keys=True) + "\n")
    return [done[qa.qa_id] for qa in qas]


def eval_generation(docs: Sequence[StructuredDoc], qas: Sequence[QARecord],
                    gen_cfg: GenConfig, asset: PromptAsset | None = None,
                    max_workers: int = 1,
                    checkpoint_path: str | Path | None = None,
                    config: Mapping | None = None) -> EvalReport:
    """Answer F1 with the QA's own page(s) provided as context."""
    asset = asset or load_asset("rag_generation")
    pages = page_map(docs)
    fingerprint = config_fingerprint({
        "stage": STAGE_GENERATION, "model": gen_cfg.model_id,
        "temperature": gen_cfg.temperature, "max_tokens": gen_cfg.max_tokens,
        **(dict(config) if config else {}),
    })

    def worker(qa: QARecord) -> dict:
        entry: dict = {"qa_id": qa.qa_id}
        missing = [key for key in qa.pages if key not in pages]
        if missing:
            entry.update(metric=0.0, error=f"missing pages {missing}")
            return entry
        contexts = [serialize_doc(pages[key]) for key in qa.pages]
        try:
            raw = generate(gen_cfg, render_prompt(asset, qa.question, contexts))
            answer, fallback = split_response(raw.text)
            entry["metric"] = answer_f1(answer, list(qa.answers))
            entry["response"] = answer
            if fallback:
                entry["fallback"] = True
        except _GEN_ERRORS as exc:
            entry.update(metric=0.0, error=str(exc))
        return entry

    per_qa = _run_parallel(worker, qas, max_workers, checkpoint_path)
    return _aggregate(STAGE_GENERATION, qas, per_qa, fingerprint)


def eval_e2e(kbs: Mapping[str, KnowledgeBase], qas: Sequence[QARecord],
             retriever, gen_cfg: GenConfig, k: int = 2,
             asset: PromptAsset | None = None, max_workers: int = 1,
             checkpoint_path: str | Path | None = None,
             config: Mapping | None = None) -> EvalReport:
    """Retrieve top-k chunks, generate from them, score answer F1; per-QA
    records keep both the retrieved ids and the response."""
    asset = asset or load_asset("rag_generation")
    fingerprint = config_fingerprint({
        "stage": STAGE_E2E, "k": k, "retriever": retriever.name,
        "model": gen_cfg.model_id, "temperature": gen_cfg.temperature,
        "max_tokens": gen_cfg.max_tokens, **(dict(config) if config else {}),
    })

    def worker(qa: QARecord) -> dict:
        entry: dict = {"qa_id": qa.qa_id}
        if qa.domain not in kbs:
            raise MissingDomainKB(qa.domain)
        kb = kbs[qa.domain]
        try:
            result = retriever.retrieve(kb, qa, k)
        except (RetrievalError, EmptyKnowledgeBase) as exc:
            entry.update(metric=0.0, error=f"retrieval failed: {exc}", retrieved_ids=[])
            return entry
        entry["retrieved_ids"] = list(result.chunk_ids())
        contexts = _retrieved_texts(kb, result)
        try:
            raw = generate(gen_cfg, render_prompt(asset, qa.question, contexts))
            answer, fallback = split_response(raw.text)
            entry["metric"] = answer_f1(answer, list(qa.answers))
            entry["response"] = answer
            if fallback:
                entry["fallback"] = True
        except _GEN_ERRORS as exc:
            entry.update(metric=0.0, error=str(exc))
        return entry

    per_qa = _run_parallel(worker, qas, max_workers, checkpoint_path)
    return _aggregate(STAGE_E2E, qas, per_qa, fingerprint)


# --- offline scoring of externally produced predictions ------------------------

def score_predictions(task: str, rows: Sequence[Mapping], qas: Sequence[QARecord],
                      fmt_aware: bool = False, plan: FmtPlan | None = None) -> EvalReport:
    """Score a predictions file: retrieval rows carry {qa_id, retrieved:[texts]},
    generation rows {qa_id, response}; e2e rows carry both."""
    if task not in (STAGE_RETRIEVAL, STAGE_GENERATION, STAGE_E2E):
        raise ValueError(f"unknown task {task!r}")
    by_id = {row["qa_id"]: row for row in rows}
    fingerprint = config_fingerprint({"stage": task, "fmt_aware": fmt_aware,
                                      "offline": True})
    per_qa = []
    for qa in qas:
        row = by_id.get(qa.qa_id)
        entry: dict = {"qa_id": qa.qa_id}
        if row is None:
            entry.update(metric=0.0, error="missing prediction")
        elif task == STAGE_RETRIEVAL:
            joined = CHUNK_JOIN.join(row.get("retrieved", []))
            entry["metric"] = (lcs_score_fmt_aware(qa.evidence, joined, plan)
                               if fmt_aware else lcs_score(qa.evidence, joined))
        elif task in (STAGE_GENERATION, STAGE_E2E):
            answer, fallback = split_response(row.get("response", ""))
            entry["metric"] = answer_f1(answer, list(qa.answers))
            entry["response"] = answer
            if fallback and row.get("response", ""):
                entry["fallback"] = True
            if "retrieved" in row:
                entry["retrieved"] = list(row["retrieved"])
        per_qa.append(entry)
    return _aggregate(task, qas, per_qa, fingerprint)


# --- error analysis -------------------------------------------------------------

def error_breakdown(report: EvalReport, qas: Sequence[QARecord],
                    perturbed_pages: Mapping[tuple[str, int], str],
                    correct_threshold: float = 1.0) -> dict:
    """2x2 counts of {OCR-affected vs unaffected} x {correct vs incorrect},
    using the perturbation-quantifier rule for "affected" and an answer-F1
    threshold for "correct"."""
    metrics = {entry["qa_id"]: entry["metric"] for entry in report.per_qa}
    counts = {
        "affected_correct": 0, "affected_incorrect": 0,
        "unaffected_correct": 0, "unaffected_incorrect": 0,
    }
    for qa in qas:
        affected = is_affected(qa, perturbed_pages)
        correct = metrics[qa.qa_id] >= correct_threshold
        key = ("affected" if affected else "unaffected") + \
              ("_correct" if correct else "_incorrect")
        counts[key] += 1
    total = len(qas)
    affected_total = counts["affected_correct"] + counts["affected_incorrect"]
    return {
        "counts": counts,
        "total": total,
        "affected_fraction": affected_total / total if total else 0.0,
    }


# --- report rendering -------------------------------------------------------------

_COLUMNS = list(EVIDENCE_SOURCES) + ["ALL"]


def render_report_table(entries: Sequence[tuple[str, EvalReport]]) -> str:
    """Text table, one row per report: TXT TAB FOR CHA RO ALL (percentages)."""
    label_width = max([len(label) for label, _ in entries] + [8])
    header = "".join(f"{col:>7}" for col in _COLUMNS)
    lines = [f"{'':<{label_width}}{header}"]
    for label, report in entries:
        cells = []
        for source in EVIDENCE_SOURCES:
            value = report.by_source.get(source)
            cells.append(f"{100 * value:>7.1f}" if value is not None else f"{'-':>7}")
        cells.append(f"{100 * report.overall:>7.1f}")
        lines.append(f"{label:<{label_width}}" + "".join(cells))
    return "\n".join(lines)


def reports_to_csv(entries: Sequence[tuple[str, EvalReport]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["label", "stage"] + _COLUMNS)
    for label, report in entries:
        row = [label, report.stage]
        row += [report.by_source.get(s, "") for s in EVIDENCE_SOURCES]
        row.append(report.overall)
        writer.writerow(row)
    return buffer.getvalue()
