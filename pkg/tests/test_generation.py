import pytest

from ragnoise.generation import (
    GenConfig,
    MissingSlot,
    NonRetryableStatus,
    PromptAsset,
    extract_response,
    generate,
    list_assets,
    load_asset,
    render_prompt,
    split_response,
)
from ragnoise.retrieval import EndpointUnavailable


def test_rag_asset_reproduces_reference_template():
    asset = load_asset("rag_generation")
    assert "Write the answers within <response></response>." in asset.system
    assert "You **MUST** answer the questions briefly" in asset.system
    assert asset.user == "Question: {question}\nRetrieved Documents: {retrieved_documents}"


def test_all_shipped_assets_present():
    names = list_assets()
    for expected in ("rag_generation", "vlm_ocr_simple", "vlm_ocr_detailed",
                     "qa_generation", "qa_task_descriptions", "qa_multipage",
                     "qa_verification"):
        assert expected in names


def test_render_prompt_empty_context():
    asset = load_asset("rag_generation")
    system, user = render_prompt(asset, "What is X?", [])
    assert user.endswith("Retrieved Documents: ")
    assert "What is X?" in user
    assert "{" not in user


def test_render_prompt_two_contexts_in_order():
    asset = load_asset("rag_generation")
    _, user = render_prompt(asset, "Q?", ["first chunk", "second chunk"])
    assert "Document 1: first chunk" in user
    assert "Document 2: second chunk" in user
    assert user.index("Document 1:") < user.index("Document 2:")


def test_render_prompt_golden():
    from pathlib import Path

    asset = load_asset("rag_generation")
    system, user = render_prompt(
        asset, "Which month had the highest output?",
        ["January & 118", "March & 163"])
    golden = (Path(__file__).parent / "fixtures" / "golden" / "render_prompt.txt").read_text()
    assert f"{system}\n---\n{user}" == golden


def test_render_prompt_missing_slot():
    bad = PromptAsset("bad", "sys", "no slots here")
    with pytest.raises(MissingSlot):
        render_prompt(bad, "Q?", [])
    partial = PromptAsset("partial", "", "Question: {question}")
    with pytest.raises(MissingSlot):
        render_prompt(partial, "Q?", [])


def test_extract_response_variants():
    assert extract_response("<response>42</response>") == "42"
    assert extract_response("noise <response> Paris </response> tail") == "Paris"
    text, fallback = split_response("no tags here")
    assert text == "no tags here"
    assert fallback is True
    text, fallback = split_response("<response>x</response>")
    assert fallback is False
    # idempotent: extracting an already-extracted answer is a no-op
    assert extract_response(extract_response("<response>x</response>")) == "x"


def test_generate_against_mock(mock_server):
    mock_server.chat_fn = lambda payload: "<response>X</response>"
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="test-model")
    result = generate(cfg, ("system prompt", "user prompt"))
    assert extract_response(result.text) == "X"
    assert result.usage["completion_tokens"] == 3
    assert result.latency_s > 0
    sent = mock_server.requests[-1]["payload"]
    assert sent["model"] == "test-model"
    assert sent["temperature"] == 0  # reproducibility default
    assert [m["role"] for m in sent["messages"]] == ["system", "user"]


def test_generate_retries_then_succeeds(mock_server):
    mock_server.status_script = [500, 500, 200]
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="m", max_retries=3)
    result = generate(cfg, ("", "hello"))
    assert "ok" in result.text
    assert len(mock_server.requests) == 3


def test_generate_retries_exhausted(mock_server):
    mock_server.status_script = [500, 500, 500]
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="m", max_retries=3)
    with pytest.raises(EndpointUnavailable):
        generate(cfg, ("", "hello"))


def test_generate_non_retryable_status(mock_server):
    mock_server.status_script = [400]
    cfg = GenConfig(endpoint_url=mock_server.url, model_id="m", max_retries=3)
    with pytest.raises(NonRetryableStatus):
        generate(cfg, ("", "hello"))
    assert len(mock_server.requests) == 1  # no retry on 4xx


def test_generate_unreachable_endpoint():
    cfg = GenConfig(endpoint_url="http://127.0.0.1:9", model_id="m",
                    max_retries=2, timeout=0.2)
    with pytest.raises(EndpointUnavailable):
        generate(cfg, ("", "hello"))
