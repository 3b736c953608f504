import pytest

from ragnoise.docmodel import qa_from_dict
from ragnoise.generation import GenConfig
from ragnoise.qafilter import (
    EmptyResponses,
    context_dependence_check,
    correctness_vote,
    filter_qas,
    llm_judge_qa,
    multipage_validity,
    parse_verdict,
)


def qa(question="What is the melting point of tungsten?", answers=("3422",), **kw):
    return qa_from_dict({
        "qa_id": kw.pop("qa_id", "q1"), "doc_id": "d", "page_no": 1,
        "question": question, "answers": list(answers),
        "evidence": "evidence text", "evidence_source": "TXT",
        "task": "Understanding", "domain": "Textbook", **kw,
    })


def test_document_phrase_fails():
    result = context_dependence_check("According to the document, what is X?")
    assert not result.passed
    assert any("document-referential" in r for r in result.reasons)


def test_plain_entity_question_passes():
    result = context_dependence_check("What is the melting point of tungsten?")
    assert result.passed
    assert result.reasons == ()


def test_multiple_pronouns_fail():
    result = context_dependence_check("Why did he say this about it?")
    assert not result.passed
    assert any("pronouns: 3" in r for r in result.reasons)


def test_single_pronoun_with_entity_passes():
    result = context_dependence_check("What did Marie Curie discover, and when was it isolated?")
    assert result.passed


def test_no_entity_fails():
    result = context_dependence_check("What is it?")
    assert not result.passed
    assert any("entity" in r for r in result.reasons)


def test_entity_and_no_pronouns_never_false_fails():
    questions = [
        "Which company reported USD 31 million revenue in 2023?",
        "How many pumps does the Miller Works facility operate?",
        "What penalty does Section 12 of the Transport Act impose?",
    ]
    for q in questions:
        assert context_dependence_check(q).passed, q


def test_filter_is_idempotent():
    first = context_dependence_check("Why did he say this about it?")
    second = context_dependence_check("Why did he say this about it?")
    assert first == second


def test_correctness_vote_all_correct():
    assert correctness_vote(qa(), ["3422"] * 10) is True


def test_correctness_vote_below_threshold():
    assert correctness_vote(qa(), ["3422"] * 2 + ["wrong"] * 8) is False


def test_correctness_vote_plurality_wrong():
    responses = ["3422"] * 3 + ["1000"] * 7
    assert correctness_vote(qa(), responses) is False


def test_correctness_vote_tie_fails_closed():
    responses = ["3422"] * 5 + ["1000"] * 5
    assert correctness_vote(qa(), responses) is False


def test_correctness_vote_empty_responses():
    with pytest.raises(EmptyResponses):
        correctness_vote(qa(), [])


def test_multipage_validity():
    record = qa(question="Combined question about Acme Corp?",
                answers=("42",), multipage=True, second_page_no=2)
    wrong = ["no idea"] * 3
    right = ["42"]
    assert multipage_validity(record, wrong, wrong, wrong) is True
    assert multipage_validity(record, wrong, right, wrong) is False
    assert multipage_validity(record, right, wrong, wrong) is False


def test_parse_verdict():
    assert parse_verdict("pass") is True
    assert parse_verdict("<response>FAIL</response>") is False
    assert parse_verdict("The answer is maybe") is None


def test_llm_judge_roundtrip(mock_server):
    mock_server.chat_fn = lambda payload: "<response>pass</response>"
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="judge")
    assert llm_judge_qa(qa(), cfg) is True
    mock_server.chat_fn = lambda payload: "<response>fail</response>"
    assert llm_judge_qa(qa(), cfg) is False
    mock_server.chat_fn = lambda payload: "<response>shrug</response>"
    with pytest.warns(UserWarning):
        assert llm_judge_qa(qa(), cfg) is False  # fail closed


def test_filter_qas_report():
    records = [
        qa(qa_id="good"),
        qa(qa_id="bad", question="According to the document, why did he say this?"),
    ]
    kept, report = filter_qas(records)
    assert [r.qa_id for r in kept] == ["good"]
    assert report.total == 2 and report.passed == 1 and report.failed == 1
    assert report.per_qa[1]["reasons"]
