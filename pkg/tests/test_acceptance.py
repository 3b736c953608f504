"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`."""

import math
import random
import time
import warnings

import numpy as np
import pytest

from conftest import gold_echo_chat
from ragnoise.docmodel import Block, BlockKind, TableFormat, plain_text_of, serialize_doc
from ragnoise.fmtnoise import (
    Cell,
    FmtPlan,
    MergedCellsMarkdownWarning,
    normalize_ws,
    perturb_doc,
    render_grid,
    strip_formatting,
    table_grid,
)
from ragnoise.generation import GenConfig
from ragnoise.harness import BM25Retriever, OracleRetriever, eval_e2e, eval_generation, eval_retrieval
from ragnoise.imgnoise import (
    STRONG_KINDS,
    WEAK_KINDS,
    DistortionKind,
    DistortionSpec,
    SeverityMode,
    distort,
    mode_kinds,
)
from ragnoise.metrics import edit_distance_norm, lcs_score, lcs_score_fmt_aware, levenshtein, lcs_length, r_noise
from ragnoise.retrieval import BM25_B, BM25_K1, Chunk, bm25_build, bm25_query, build_domain_kbs, chunk_text, tokenize

SEED = 42
RATES = (0.1, 0.3, 0.6)


def check(number, description, passed):
    print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}: {description}")
    assert passed, f"criterion {number} failed: {description}"


# --- 1. metric oracle equivalence --------------------------------------------

def _levenshtein_dp(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[len(b)]


def _lcs_dp(a, b):
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def test_criterion_1_metric_oracle_equivalence():
    rng = random.Random(1234)
    alphabet = "abcd"
    start = time.monotonic()
    mismatches = 0
    for _ in range(10_000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        if levenshtein(a, b) != _levenshtein_dp(a, b):
            mismatches += 1
        if lcs_length(a, b) != _lcs_dp(a, b):
            mismatches += 1
        if b:
            expected = _levenshtein_dp(a, b) / max(len(a), len(b)) if a != b else 0.0
            if abs(edit_distance_norm(a, b) - expected) > 1e-12:
                mismatches += 1
        if a:
            if abs(lcs_score(a, b) - _lcs_dp(a, b) / len(a)) > 1e-12:
                mismatches += 1
    elapsed = time.monotonic() - start
    check(1, f"edit distance and LCS match DP oracles on 10,000 pairs "
             f"({elapsed:.1f}s < 30s)", mismatches == 0 and elapsed < 30.0)


# --- 2. BM25 exactness ---------------------------------------------------------

def _okapi_oracle(texts, query):
    toks = [tokenize(t) for t in texts]
    n = len(toks)
    lengths = [len(t) for t in toks]
    avg = sum(lengths) / n
    dfs = {}
    for t in toks:
        for term in set(t):
            dfs[term] = dfs.get(term, 0) + 1
    scores = []
    for i in range(n):
        tf = {}
        for term in toks[i]:
            tf[term] = tf.get(term, 0) + 1
        s = 0.0
        for term in tokenize(query):
            f = tf.get(term, 0)
            if f == 0:
                continue
            idf = max(0.0, math.log((n - dfs[term] + 0.5) / (dfs[term] + 0.5)))
            s += idf * f * (BM25_K1 + 1.0) / (
                f + BM25_K1 * (1.0 - BM25_B + BM25_B * lengths[i] / avg))
        scores.append(s)
    return scores


def test_criterion_2_bm25_exactness():
    rng = random.Random(77)
    vocab = [f"w{i}" for i in range(40)]
    discrepancies = 0
    for _ in range(50):
        n = rng.randint(1, 100)
        texts = [" ".join(rng.choices(vocab, k=rng.randint(1, 50))) for _ in range(n)]
        query = " ".join(rng.choices(vocab, k=rng.randint(1, 8)))
        kb = bm25_build([Chunk(f"c{i:03d}", "d", 1, (0, 0), t)
                         for i, t in enumerate(texts)])
        result = bm25_query(kb, query, k=n)
        oracle = {f"c{i:03d}": s for i, s in enumerate(_okapi_oracle(texts, query))}
        for cid, score in result.hits:
            if score != oracle[cid]:
                discrepancies += 1
        expected_order = sorted(oracle, key=lambda c: (-oracle[c], c))
        if list(result.chunk_ids()) != expected_order:
            discrepancies += 1
    check(2, "BM25 rankings and scores match brute-force Okapi on 50 corpora",
          discrepancies == 0)


# --- 3. formatting-noise semantic conservation ---------------------------------

def test_criterion_3_semantic_conservation(corpus, qa_set):
    conserved = True
    for rate in RATES:
        plan = FmtPlan(rate=rate, seed=SEED)
        for doc in corpus:
            perturbed = perturb_doc(doc, plan)
            if strip_formatting(perturbed) != normalize_ws(plain_text_of(doc)):
                conserved = False

    pages = {d.page_key: serialize_doc(d) for d in corpus}
    verbatim = [qa for qa in qa_set
                if qa.evidence in "\n".join(pages[k] for k in qa.pages)]
    recovered = bool(verbatim)
    for rate in RATES:
        plan = FmtPlan(rate=rate, seed=SEED)
        noisy = {d.page_key: serialize_doc(perturb_doc(d, plan)) for d in corpus}
        for qa in verbatim:
            joined = "\n".join(noisy[k] for k in qa.pages)
            if lcs_score_fmt_aware(qa.evidence, joined, plan) != 1.0:
                recovered = False
    check(3, f"strip(perturb(d, r)) == plain text for 30 pages x 3 rates and "
             f"fmt-aware LCS == 1.0 for {len(verbatim)} verbatim-evidence QAs",
          conserved and recovered)


# --- 4. r_noise anchors and monotonicity ---------------------------------------

def test_criterion_4_r_noise_anchor_and_monotonicity(corpus, qa_set):
    gt_pages = {d.page_key: serialize_doc(d) for d in corpus}
    anchored = r_noise(qa_set, gt_pages) == 0.0
    values = []
    for rate in RATES:
        plan = FmtPlan(rate=rate, seed=SEED)
        pages = {d.page_key: serialize_doc(perturb_doc(d, plan)) for d in corpus}
        values.append(r_noise(qa_set, pages))
    strictly_increasing = values[0] < values[1] < values[2]
    check(4, f"r_noise 0.0 on ground truth and strictly increasing "
             f"{[round(v, 4) for v in values]} across rates {RATES}",
          anchored and strictly_increasing)


# --- 5. semantic-noise parameter conformance ------------------------------------

def test_criterion_5_semantic_noise_parameters():
    gray = np.full((100, 100, 3), 128, np.uint8)
    ratio_ok = True
    for seed in range(20):
        out = distort(gray, DistortionSpec(DistortionKind.SALT_PEPPER, seed=seed))
        changed = np.any(out != gray, axis=2).mean()
        if abs(changed - 0.01) > 0.0005:
            ratio_ok = False

    bar = np.full((200, 200, 3), 255, np.uint8)
    bar[95:105, 20:180] = 0
    rotation_ok = True
    for seed in range(40):
        out = distort(bar, DistortionSpec(DistortionKind.ROTATION, seed=seed))
        ys, xs = np.where(out[:, :, 0] < 128)
        x, y = xs - xs.mean(), ys - ys.mean()
        tilt = math.degrees(0.5 * math.atan2(2 * np.mean(x * y),
                                             np.mean(x * x) - np.mean(y * y)))
        if abs(tilt) > 3.15:
            rotation_ok = False

    membership_ok = True
    for seed in range(10_000):
        weak = mode_kinds(SeverityMode.ONE_WEAK, seed)
        strong = mode_kinds(SeverityMode.ONE_STRONG, seed)
        if len(weak) != 1 or weak[0] not in WEAK_KINDS:
            membership_ok = False
        if len(strong) != 1 or strong[0] not in STRONG_KINDS:
            membership_ok = False

    page = np.full((64, 48, 3), 255, np.uint8)
    page[10:14, 5:40] = 0
    deterministic = True
    for kind in DistortionKind:
        spec = DistortionSpec(kind, seed=321)
        if not np.array_equal(distort(page, spec), distort(page, spec)):
            deterministic = False

    check(5, "salt-pepper 1.0% +- 0.05%, rotation within +-3 deg, "
             "mode membership clean over 10,000 draws, distortions deterministic",
          ratio_ok and rotation_ok and membership_ok and deterministic)


# --- 6. end-to-end determinism ---------------------------------------------------

def test_criterion_6_e2e_byte_identical(corpus, qa_set, mock_server):
    mock_server.chat_fn = gold_echo_chat({qa.question: qa for qa in qa_set})
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="mock-model")

    def run():
        kbs = build_domain_kbs(corpus)
        return eval_e2e(kbs, qa_set, BM25Retriever(), cfg, k=2,
                        config={"corpus": "fixtures", "seed": SEED})

    first, second = run(), run()
    identical = (first.config_fingerprint == second.config_fingerprint
                 and first.to_json().encode("utf-8") == second.to_json().encode("utf-8"))
    check(6, "two full e2e runs with identical fingerprints are byte-identical",
          identical)


# --- 7. stage composition ---------------------------------------------------------

def test_criterion_7_oracle_retriever_matches_generation(corpus, qa_set, mock_server):
    mock_server.chat_fn = gold_echo_chat({qa.question: qa for qa in qa_set})
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="mock-model")
    gen = eval_generation(corpus, qa_set, cfg)
    e2e = eval_e2e(build_domain_kbs(corpus), qa_set, OracleRetriever(), cfg, k=2)
    gen_metrics = {e["qa_id"]: e["metric"] for e in gen.per_qa}
    e2e_metrics = {e["qa_id"]: e["metric"] for e in e2e.per_qa}
    check(7, f"oracle-retriever e2e equals generation per-QA on {len(qa_set)} QAs",
          gen_metrics == e2e_metrics)


# --- 8. chunking contract ----------------------------------------------------------

def test_criterion_8_chunking_contract():
    rng = random.Random(8)
    violations = 0
    for _ in range(100):
        n_tokens = rng.randint(0, 5000)
        text = " ".join(f"tok{i}" for i in range(n_tokens))
        chunks = chunk_text(text, "d", 1, size=1024, overlap=0)
        covered = []
        for chunk in chunks:
            start, end = chunk.token_span
            if end - start > 1024:
                violations += 1
            covered.extend(range(start, end))
        if covered != list(range(n_tokens)):
            violations += 1
    check(8, "chunk spans are disjoint, covering, and at most 1024 tokens "
             "for 100 random lengths", violations == 0)


# --- 9. qualitative trend reproduction ----------------------------------------------

def test_criterion_9_retrieval_degradation_trend(corpus, qa_set):
    retriever = BM25Retriever()
    reports = {}
    for rate in (0.0,) + RATES:
        if rate == 0.0:
            perturbed = corpus
        else:
            plan = FmtPlan(rate=rate, seed=SEED)
            perturbed = [perturb_doc(d, plan) for d in corpus]
        reports[rate] = eval_retrieval(build_domain_kbs(perturbed), qa_set,
                                       retriever, k=2)
    overalls = [reports[r].overall for r in (0.0,) + RATES]
    non_increasing = all(a >= b for a, b in zip(overalls, overalls[1:]))
    drop = {s: reports[0.0].by_source[s] - reports[0.6].by_source[s]
            for s in ("TXT", "TAB", "FOR")}
    multimodal_worse = (drop["TAB"] + drop["FOR"]) / 2 > drop["TXT"]
    check(9, f"retrieval overall non-increasing {[round(o, 4) for o in overalls]} "
             f"and TAB+FOR degradation ({(drop['TAB'] + drop['FOR']) / 2:.4f}) "
             f"exceeds TXT ({drop['TXT']:.4f})",
          non_increasing and multimodal_worse)


# --- 10. table conversion -------------------------------------------------------------

def _random_grid(rng, max_dim=8, max_merges=2):
    n_rows = rng.randint(1, max_dim)
    width = rng.randint(1, max_dim)
    merges_left = max_merges
    counter = 0
    grid = []
    for _ in range(n_rows):
        row = []
        remaining = width
        while remaining:
            span = 1
            if merges_left and remaining >= 2 and rng.random() < 0.35:
                span = rng.randint(2, remaining)
                merges_left -= 1
            row.append(Cell(f"cell {counter}", span))
            counter += 1
            remaining -= span
        grid.append(row)
    return grid


def test_criterion_10_table_conversion_round_trip():
    rng = random.Random(10)
    round_trip_ok = True
    warning_ok = True
    for _ in range(50):
        grid = _random_grid(rng)
        latex = Block(BlockKind.TABLE, render_grid(grid, TableFormat.LATEX),
                      table_format=TableFormat.LATEX)
        html = Block(BlockKind.TABLE, render_grid(table_grid(latex), TableFormat.HTML),
                     table_format=TableFormat.HTML)
        back = table_grid(html)
        if back != grid:
            round_trip_ok = False
        has_span = any(cell.colspan > 1 for row in grid for cell in row)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            render_grid(grid, TableFormat.MARKDOWN)
        warned = any(issubclass(w.category, MergedCellsMarkdownWarning) for w in caught)
        if warned != has_span:
            warning_ok = False
    check(10, "LaTeX<->HTML round-trip preserves 50 random grids exactly; "
              "Markdown conversion warns exactly when a merged span exists",
          round_trip_ok and warning_ok)
