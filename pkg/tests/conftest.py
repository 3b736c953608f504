import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ragnoise.docmodel import load_qa, parse_doc

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture_corpus():
    manifest = json.loads((FIXTURES / "corpus_manifest.json").read_text())
    return [
        parse_doc((FIXTURES / entry["file"]).read_text(), entry["doc_id"],
                  entry["page_no"], entry["domain"])
        for entry in manifest
    ]


@pytest.fixture(scope="session")
def corpus():
    return load_fixture_corpus()


@pytest.fixture(scope="session")
def qa_set():
    return load_qa(FIXTURES / "qa.jsonl")


def hash_embedding(text: str, dim: int = 16) -> list[float]:
    """Deterministic pseudo-embedding used by the mock endpoint."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    raw = (digest * ((dim // len(digest)) + 1))[:dim]
    return [(b - 127.5) / 127.5 for b in raw]


class MockOpenAIServer:
    """Scripted OpenAI-compatible endpoint for chat completions and embeddings.

    ``chat_fn(payload) -> str`` produces the assistant message;
    ``status_script`` is a queue of HTTP status codes to emit (with empty
    bodies) before behaving normally, for retry tests.
    """

    def __init__(self):
        self.chat_fn = lambda payload: "<response>ok</response>"
        self.status_script: list[int] = []
        self.requests: list[dict] = []
        self._lock = threading.Lock()

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with server._lock:
                    server.requests.append({"path": self.path, "payload": payload})
                    scripted = server.status_script.pop(0) if server.status_script else None
                if scripted is not None and scripted != 200:
                    self.send_response(scripted)
                    self.end_headers()
                    return
                if self.path.endswith("/v1/chat/completions"):
                    content = server.chat_fn(payload)
                    body = {
                        "choices": [{"message": {"role": "assistant", "content": content}}],
                        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
                    }
                elif self.path.endswith("/v1/embeddings"):
                    body = {
                        "data": [{"embedding": hash_embedding(text)}
                                 for text in payload.get("input", [])],
                    }
                else:
                    self.send_response(404)
                    self.end_headers()
                    return
                raw = json.dumps(body).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def mock_server():
    server = MockOpenAIServer().start()
    yield server
    server.stop()


def user_question(payload) -> str:
    """Pull the question line back out of a rendered chat payload."""
    user = next(m["content"] for m in payload["messages"] if m["role"] == "user")
    first_line = user.splitlines()[0]
    prefix = "Question: "
    return first_line[len(prefix):] if first_line.startswith(prefix) else first_line


def gold_echo_chat(qa_by_question):
    """chat_fn answering each known question with its first gold answer."""

    def chat(payload):
        question = user_question(payload)
        qa = qa_by_question.get(question)
        if qa is None:
            return "<response>unknown</response>"
        return f"<response>{qa.answers[0]}</response>"

    return chat
