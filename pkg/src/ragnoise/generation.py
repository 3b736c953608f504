"""Generation stage: prompt assets, rendering, an OpenAI-compatible chat
client with retries, and delimited answer extraction."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import requests

from .retrieval import EndpointUnavailable


class MissingSlot(ValueError):
    pass


class NonRetryableStatus(RuntimeError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"endpoint returned HTTP {status}: {detail}")
        self.status = status


class RequestTimeout(RuntimeError):
    pass


ASSET_SEPARATOR = "=== USER ==="

QUESTION_SLOT = "{question}"
CONTEXT_SLOT = "{retrieved_documents}"


@dataclass(frozen=True)
class PromptAsset:
    """A system/user template pair stored as an editable text file."""

    name: str
    system: str
    user: str


def parse_asset(name: str, text: str) -> PromptAsset:
    if ASSET_SEPARATOR in text:
        system, user = text.split(ASSET_SEPARATOR, 1)
    else:
        system, user = "", text
    return PromptAsset(name=name, system=system.strip(), user=user.strip())


def load_asset(name: str) -> PromptAsset:
    path = resources.files("ragnoise").joinpath("assets", f"{name}.txt")
    return parse_asset(name, path.read_text(encoding="utf-8"))


def list_assets() -> list[str]:
    root = resources.files("ragnoise").joinpath("assets")
    return sorted(p.name[: -len(".txt")] for p in root.iterdir() if p.name.endswith(".txt"))


# Retrieved chunks joined as "Document i: ..." paragraphs.
CONTEXT_SEPARATOR = "\n\n"


def format_contexts(contexts: Sequence[str]) -> str:
    return CONTEXT_SEPARATOR.join(
        f"Document {i}: {text}" for i, text in enumerate(contexts, 1))


def render_prompt(asset: PromptAsset, question: str,
                  contexts: Sequence[str]) -> tuple[str, str]:
    """Substitute the question and retrieved-document slots; returns
    (system, user). Raises MissingSlot when the template lacks a slot."""
    if QUESTION_SLOT not in asset.user:
        raise MissingSlot(f"asset {asset.name!r} has no {QUESTION_SLOT} slot")
    if CONTEXT_SLOT not in asset.user:
        raise MissingSlot(f"asset {asset.name!r} has no {CONTEXT_SLOT} slot")
    user = asset.user.replace(QUESTION_SLOT, question)
    user = user.replace(CONTEXT_SLOT, format_contexts(contexts))
    for leftover in (QUESTION_SLOT, CONTEXT_SLOT):
        if leftover in user:
            raise MissingSlot(f"unresolved slot {leftover} after rendering")
    return asset.system, user


_RESPONSE_RE = re.compile(r"<response>(.*?)</response>", re.DOTALL | re.IGNORECASE)


def split_response(raw: str) -> tuple[str, bool]:
    """(answer, used_fallback): the first well-formed <response> pair, or the
    whole trimmed string when the tags are absent."""
    m = _RESPONSE_RE.search(raw)
    if m:
        return m.group(1).strip(), False
    return raw.strip(), True


def extract_response(raw: str) -> str:
    return split_response(raw)[0]


@dataclass(frozen=True)
class GenConfig:
    endpoint_url: str
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 256
    max_retries: int = 3
    timeout: float = 60.0


@dataclass
class GenResult:
    text: str
    latency_s: float = 0.0
    usage: dict = field(default_factory=dict)


_RETRYABLE = {429, 500, 502, 503, 504}


def generate(cfg: GenConfig, prompt: tuple[str, str]) -> GenResult:
    """POST the rendered (system, user) prompt to /v1/chat/completions and
    return the raw model text, retrying transient failures."""
    system, user = prompt
    url = cfg.endpoint_url.rstrip("/") + "/v1/chat/completions"
    messages = []
    if system:
        messages.append({"role": "system", "content": system})
    messages.append({"role": "user", "content": user})
    body = {
        "model": cfg.model_id,
        "messages": messages,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    start = time.monotonic()
    last_error: Exception | None = None
    timed_out = False
    for attempt in range(cfg.max_retries):
        try:
            resp = requests.post(url, json=body, timeout=cfg.timeout)
        except requests.Timeout as exc:
            last_error, timed_out = exc, True
        except requests.RequestException as exc:
            last_error = exc
        else:
            if resp.status_code == 200:
                payload = resp.json()
                text = payload["choices"][0]["message"]["content"]
                return GenResult(
                    text=text,
                    latency_s=time.monotonic() - start,
                    usage=payload.get("usage") or {},
                )
            if resp.status_code not in _RETRYABLE:
                raise NonRetryableStatus(resp.status_code, resp.text[:200])
            last_error = EndpointUnavailable(f"HTTP {resp.status_code}")
        if attempt + 1 < cfg.max_retries:
            time.sleep(min(2.0, 0.05 * 2 ** attempt))
    if timed_out:
        raise RequestTimeout(f"chat endpoint timed out after {cfg.max_retries} attempts")
    raise EndpointUnavailable(
        f"chat endpoint failed after {cfg.max_retries} attempts: {last_error}")
