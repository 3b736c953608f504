"""Guards on the bundled fixture corpus: the trend and conservation checks
assume pages are clean of the very markers the noise rules inject."""

import re

from ragnoise.docmodel import DOMAINS, serialize_doc
from ragnoise.metrics import lcs_score, qa_page_text
from ragnoise.qafilter import context_dependence_check
from ragnoise.retrieval import tokenize

# Constructs whose presence in ground truth would make stripping lossy.
FORBIDDEN = [
    r"\\mathbf", r"\\boldsymbol", r"\\mathbb", r"\\pmb", r"\\mathrsfs",
    r"\\euscript", r"\\mathcal", r"\\textbf", r"\\textit", r"\\underline",
    r"\\quad", r"\\qquad", r"\\;", r"\\:", r"\\hline", r"\\cline",
    r"\*", r"(?<![\w\\])_",
]
_UNICODE_MATH = re.compile(r"[Ͱ-Ͽ∀-⋿℀-⅏]")


def test_corpus_shape(corpus):
    assert len(corpus) == 30
    assert {d.domain for d in corpus} == set(DOMAINS)


def test_pages_clean_of_injectable_markers(corpus):
    for doc in corpus:
        text = serialize_doc(doc)
        for pattern in FORBIDDEN:
            assert not re.search(pattern, text), (doc.page_key, pattern)
        assert not _UNICODE_MATH.search(text), doc.page_key


def test_pages_fit_single_chunk(corpus):
    for doc in corpus:
        assert len(tokenize(serialize_doc(doc))) <= 1024, doc.page_key


def test_qa_set_shape(qa_set):
    assert len(qa_set) >= 100
    sources = {qa.evidence_source for qa in qa_set}
    assert sources == {"TXT", "TAB", "FOR", "CHA", "RO"}
    assert any(qa.multipage for qa in qa_set)
    assert {qa.task for qa in qa_set} == {"Understanding", "Reasoning"}


def test_every_evidence_verbatim_on_its_pages(corpus, qa_set):
    pages = {d.page_key: serialize_doc(d) for d in corpus}
    for qa in qa_set:
        assert lcs_score(qa.evidence, qa_page_text(qa, pages)) == 1.0, qa.qa_id


def test_questions_pass_context_dependence_filters(qa_set):
    for qa in qa_set:
        result = context_dependence_check(qa)
        assert result.passed, (qa.qa_id, result.reasons)
