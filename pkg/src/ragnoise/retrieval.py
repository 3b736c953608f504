"""Tokenization, chunking, per-domain knowledge bases, Okapi BM25 ranking,
and a dense retriever backed by an OpenAI-compatible embedding endpoint."""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from .docmodel import StructuredDoc, serialize_doc

KB_FORMAT_VERSION = 1

BM25_K1 = 1.5
BM25_B = 0.75


class RetrievalError(ValueError):
    pass


class InvalidChunkParams(RetrievalError):
    pass


class EmptyKnowledgeBase(RetrievalError):
    pass


class EndpointUnavailable(RuntimeError):
    pass


class DimensionMismatch(RetrievalError):
    pass


# CJK characters tokenize individually; other word characters form runs.
_CJK = "一-鿿㐀-䶿豈-﫿"
_TOKEN_RE = re.compile(rf"[{_CJK}]|(?:(?![{_CJK}])[^\W_])+")


def tokenize(text: str) -> list[str]:
    """Lowercased word/number tokens, CJK split per character, punctuation dropped."""
    return _TOKEN_RE.findall(text.lower())


def token_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text.lower())]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    page_no: int
    token_span: tuple[int, int]
    text: str


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    hits: tuple[tuple[str, float], ...]

    def chunk_ids(self) -> list[str]:
        return [cid for cid, _ in self.hits]


def chunk_text(text: str, doc_id: str, page_no: int,
               size: int = 1024, overlap: int = 0) -> list[Chunk]:
    """Token windows over raw text; disjoint and covering at overlap 0, the
    last chunk may be short. Chunk text spans from the first to the last
    token of the window, so inter-token punctuation is preserved."""
    if size <= 0 or overlap < 0 or overlap >= size:
        raise InvalidChunkParams(f"size={size}, overlap={overlap}")
    spans = token_spans(text)
    chunks = []
    step = size - overlap
    for index, start in enumerate(range(0, len(spans), step)):
        window = spans[start : start + size]
        if not window:
            break
        chunks.append(Chunk(
            chunk_id=f"{doc_id}:p{page_no}:c{index}",
            doc_id=doc_id,
            page_no=page_no,
            token_span=(start, start + len(window)),
            text=text[window[0][1] : window[-1][2]],
        ))
    return chunks


def chunk_doc(doc: StructuredDoc, size: int = 1024, overlap: int = 0,
              strip: bool = False) -> list[Chunk]:
    """Chunk a page's serialized source (raw by default; ``strip`` indexes
    the formatting-stripped text instead)."""
    text = serialize_doc(doc)
    if strip:
        from .fmtnoise import strip_formatting

        text = strip_formatting(text)
    return chunk_text(text, doc.doc_id, doc.page_no, size=size, overlap=overlap)


@dataclass
class KnowledgeBase:
    domain: str
    chunks: list[Chunk]
    doc_freqs: dict[str, int] = field(default_factory=dict)
    chunk_lengths: list[int] = field(default_factory=list)
    avg_len: float = 0.0
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)


def bm25_build(chunks: Sequence[Chunk], domain: str = "") -> KnowledgeBase:
    if not chunks:
        raise EmptyKnowledgeBase("cannot build a knowledge base from zero chunks")
    kb = KnowledgeBase(domain=domain, chunks=list(chunks))
    for idx, chunk in enumerate(kb.chunks):
        counts = Counter(tokenize(chunk.text))
        kb.chunk_lengths.append(sum(counts.values()))
        for term, tf in counts.items():
            kb.doc_freqs[term] = kb.doc_freqs.get(term, 0) + 1
            kb.postings.setdefault(term, []).append((idx, tf))
    kb.avg_len = sum(kb.chunk_lengths) / len(kb.chunk_lengths)
    return kb


def bm25_idf(kb: KnowledgeBase, term: str) -> float:
    """Okapi IDF with the non-negative floor."""
    df = kb.doc_freqs.get(term, 0)
    if df == 0:
        return 0.0
    return max(0.0, math.log((kb.n_chunks - df + 0.5) / (df + 0.5)))


def bm25_query(kb: KnowledgeBase, query: str, k: int = 2,
               query_id: str = "") -> RetrievalResult:
    """Okapi BM25 (k1=1.5, b=0.75); ties broken by chunk_id ascending;
    returns exactly min(k, N) hits."""
    if k <= 0:
        raise RetrievalError(f"k must be positive, got {k}")
    if not kb.chunks:
        raise EmptyKnowledgeBase("query against an empty knowledge base")
    scores = [0.0] * kb.n_chunks
    avg = kb.avg_len or 1.0
    for term in tokenize(query):
        idf = bm25_idf(kb, term)
        for idx, tf in kb.postings.get(term, ()):
            norm = BM25_K1 * (1.0 - BM25_B + BM25_B * kb.chunk_lengths[idx] / avg)
            scores[idx] += idf * tf * (BM25_K1 + 1.0) / (tf + norm)
    order = sorted(range(kb.n_chunks), key=lambda i: (-scores[i], kb.chunks[i].chunk_id))
    top = order[: min(k, kb.n_chunks)]
    return RetrievalResult(query_id=query_id,
                           hits=tuple((kb.chunks[i].chunk_id, scores[i]) for i in top))


def chunks_by_id(kb: KnowledgeBase) -> dict[str, Chunk]:
    return {chunk.chunk_id: chunk for chunk in kb.chunks}


# --- persistence -------------------------------------------------------------

def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    payload = {
        "format_version": KB_FORMAT_VERSION,
        "domain": kb.domain,
        "chunks": [
            {"chunk_id": c.chunk_id, "doc_id": c.doc_id, "page_no": c.page_no,
             "token_span": list(c.token_span), "text": c.text}
            for c in kb.chunks
        ],
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True),
                          encoding="utf-8")


def load_kb(path: str | Path) -> KnowledgeBase:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != KB_FORMAT_VERSION:
        raise RetrievalError(f"unsupported KB format version {version!r}")
    chunks = [
        Chunk(chunk_id=c["chunk_id"], doc_id=c["doc_id"], page_no=int(c["page_no"]),
              token_span=tuple(c["token_span"]), text=c["text"])
        for c in payload["chunks"]
    ]
    return bm25_build(chunks, domain=payload.get("domain", ""))


def build_domain_kbs(docs: Iterable[StructuredDoc], size: int = 1024,
                     overlap: int = 0, strip: bool = False) -> dict[str, KnowledgeBase]:
    by_domain: dict[str, list[Chunk]] = {}
    for doc in docs:
        by_domain.setdefault(doc.domain, []).extend(
            chunk_doc(doc, size=size, overlap=overlap, strip=strip))
    return {domain: bm25_build(chunks, domain=domain)
            for domain, chunks in sorted(by_domain.items())}


# --- dense retrieval over an embedding endpoint ------------------------------

class EmbeddingClient:
    """Client for an OpenAI-compatible POST /v1/embeddings endpoint."""

    def __init__(self, endpoint_url: str, model_id: str, timeout: float = 30.0,
                 max_retries: int = 3, batch_size: int = 32):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.batch_size = batch_size

    def _post(self, inputs: list[str]) -> list[list[float]]:
        url = f"{self.endpoint_url}/v1/embeddings"
        body = {"model": self.model_id, "input": inputs}
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(url, json=body, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last_error = EndpointUnavailable(f"HTTP {resp.status_code}")
                elif resp.status_code != 200:
                    raise EndpointUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    data = resp.json()["data"]
                    return [row["embedding"] for row in data]
            except requests.RequestException as exc:
                last_error = exc
            if attempt + 1 < self.max_retries:
                time.sleep(min(2.0, 0.1 * 2 ** attempt))
        raise EndpointUnavailable(f"embeddings endpoint failed after "
                                  f"{self.max_retries} attempts: {last_error}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            vectors.extend(self._post(list(texts[start : start + self.batch_size])))
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionMismatch(f"ragged embedding response, shape {matrix.shape}")
        return matrix


def _chunk_digest(model_id: str, chunks: Sequence[Chunk]) -> str:
    h = hashlib.sha256(model_id.encode())
    for chunk in chunks:
        h.update(hashlib.sha256(chunk.text.encode()).digest())
    return h.hexdigest()[:16]


def embed_chunks(kb: KnowledgeBase, client: EmbeddingClient,
                 cache_dir: str | Path | None = None) -> np.ndarray:
    """Chunk embeddings for a KB, disk-cached by (model id, chunk hashes)."""
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"emb_{_chunk_digest(client.model_id, kb.chunks)}.npz"
        if cache_path.exists():
            return np.load(cache_path)["vectors"]
    vectors = client.embed([chunk.text for chunk in kb.chunks])
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(cache_path, vectors=vectors)
    return vectors


def cosine_rank(query_vec: np.ndarray, chunk_vecs: np.ndarray) -> np.ndarray:
    q_norm = np.linalg.norm(query_vec)
    c_norms = np.linalg.norm(chunk_vecs, axis=1)
    denom = np.where(c_norms * q_norm == 0.0, 1.0, c_norms * q_norm)
    return chunk_vecs @ query_vec / denom


def dense_query(client: EmbeddingClient, kb: KnowledgeBase, query: str, k: int = 2,
                chunk_vecs: np.ndarray | None = None, query_id: str = "",
                cache_dir: str | Path | None = None) -> RetrievalResult:
    """Exact cosine-similarity search over endpoint embeddings."""
    if k <= 0:
        raise RetrievalError(f"k must be positive, got {k}")
    if not kb.chunks:
        raise EmptyKnowledgeBase("query against an empty knowledge base")
    if chunk_vecs is None:
        chunk_vecs = embed_chunks(kb, client, cache_dir=cache_dir)
    if len(chunk_vecs) != kb.n_chunks:
        raise DimensionMismatch(
            f"{len(chunk_vecs)} embeddings for {kb.n_chunks} chunks")
    query_vec = client.embed([query])[0]
    if query_vec.shape[0] != chunk_vecs.shape[1]:
        raise DimensionMismatch(
            f"query dim {query_vec.shape[0]} != chunk dim {chunk_vecs.shape[1]}")
    sims = cosine_rank(query_vec, chunk_vecs)
    order = sorted(range(kb.n_chunks), key=lambda i: (-sims[i], kb.chunks[i].chunk_id))
    top = order[: min(k, kb.n_chunks)]
    return RetrievalResult(query_id=query_id,
                           hits=tuple((kb.chunks[i].chunk_id, float(sims[i])) for i in top))
