"""Block-level document model for Mathpix-flavoured Markdown pages.

A page is parsed into a flat, ordered list of typed blocks: plain text,
headings, inline/block formulas, tables (LaTeX, Markdown or HTML) and chart
extracts. Parse and serialize are inverse on the canonical form (one blank
line between blocks, LF endings), which is what the noise rules rewrite and
the chunker and metrics consume.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

DOMAINS = (
    "Textbook",
    "Law",
    "Finance",
    "Newspaper",
    "Manual",
    "Academic",
    "Administration",
)
EVIDENCE_SOURCES = ("TXT", "TAB", "FOR", "CHA", "RO")
TASKS = ("Understanding", "Reasoning")
ANSWER_FORMATS = ("String", "Numeric", "YesNo", "List")


class DocError(ValueError):
    """Malformed page source."""


class UnbalancedDelimiter(DocError):
    def __init__(self, delimiter: str, line: int):
        super().__init__(f"unbalanced {delimiter!r} starting at line {line}")
        self.delimiter = delimiter
        self.line = line


class EmptyDocument(DocError):
    def __init__(self) -> None:
        super().__init__("document has no content")


class BlockKind(str, Enum):
    TEXT = "text"
    HEADING = "heading"
    INLINE_FORMULA = "inline_formula"
    BLOCK_FORMULA = "block_formula"
    TABLE = "table"
    CHART = "chart"


class TableFormat(str, Enum):
    LATEX = "latex"
    MARKDOWN = "markdown"
    HTML = "html"


@dataclass(frozen=True)
class Block:
    """One source-ordered unit of a page.

    ``content`` excludes the delimiters that mark the block type ($ / $$ for
    formulas, <chart> tags, heading hashes); tables keep their raw source
    including the LaTeX environment / HTML tags / pipe rows. ``joined`` marks
    a block glued to its predecessor with no paragraph break, which is how
    inline formulas sit inside a paragraph.
    """

    kind: BlockKind
    content: str
    level: int = 0
    table_format: TableFormat | None = None
    joined: bool = False

    def __post_init__(self) -> None:
        if self.kind is BlockKind.HEADING and not 1 <= self.level <= 6:
            raise DocError(f"heading level {self.level} out of range 1..6")
        if self.kind is BlockKind.TABLE and self.table_format is None:
            raise DocError("table block needs a table_format")


@dataclass(frozen=True)
class StructuredDoc:
    doc_id: str
    page_no: int
    domain: str
    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        if self.page_no < 1:
            raise DocError(f"page_no must be positive, got {self.page_no}")
        if self.domain not in DOMAINS:
            raise DocError(f"unknown domain {self.domain!r}")

    @property
    def page_key(self) -> tuple[str, int]:
        return (self.doc_id, self.page_no)


_HEADING_MD = re.compile(r"^(#{1,6})\s+(.*\S|\S?)\s*$")
_HEADING_TEX = re.compile(r"^\\(section|subsection|subsubsection)\*?\{(.*)\}\s*$")
_TEX_LEVELS = {"section": 1, "subsection": 2, "subsubsection": 3}
_TABLE_BEGIN = re.compile(r"^\\begin\{(table|tabular)\}")


def _is_structure_start(line: str) -> bool:
    s = line.strip()
    return bool(
        _TABLE_BEGIN.match(s)
        or s.startswith("<chart>")
        or s.startswith("<table")
        or s.startswith("|")
        or _HEADING_MD.match(s)
        or _HEADING_TEX.match(s)
    )


def _parse_inline(text: str, base_line: int) -> list[Block]:
    """Split a paragraph into text and formula runs; runs after the first
    carry joined=True so serialization re-glues them without a break."""
    blocks: list[Block] = []

    def emit(kind: BlockKind, content: str) -> None:
        blocks.append(Block(kind, content, joined=bool(blocks)))

    pos = 0
    while pos < len(text):
        idx = text.find("$", pos)
        if idx == -1:
            emit(BlockKind.TEXT, text[pos:])
            break
        if text[pos:idx]:
            emit(BlockKind.TEXT, text[pos:idx])
        if text.startswith("$$", idx):
            close = text.find("$$", idx + 2)
            if close == -1:
                raise UnbalancedDelimiter("$$", base_line)
            emit(BlockKind.BLOCK_FORMULA, text[idx + 2 : close].strip())
            pos = close + 2
        else:
            close = text.find("$", idx + 1)
            if close == -1:
                raise UnbalancedDelimiter("$", base_line)
            emit(BlockKind.INLINE_FORMULA, text[idx + 1 : close].strip())
            pos = close + 1
    return blocks


def parse_blocks(source: str) -> tuple[Block, ...]:
    text = source.replace("\r\n", "\n").replace("\r", "\n")
    lines = text.split("\n")
    blocks: list[Block] = []
    i = 0
    n = len(lines)
    while i < n:
        stripped = lines[i].strip()
        if not stripped:
            i += 1
            continue

        m = _TABLE_BEGIN.match(stripped)
        if m:
            env = m.group(1)
            begin_re = re.compile(r"\\begin\{" + env + r"\}")
            end_re = re.compile(r"\\end\{" + env + r"\}")
            depth = 0
            j = i
            while j < n:
                depth += len(begin_re.findall(lines[j]))
                depth -= len(end_re.findall(lines[j]))
                if depth == 0:
                    break
                j += 1
            if j >= n:
                raise UnbalancedDelimiter(f"\\begin{{{env}}}", i + 1)
            content = "\n".join(line.rstrip() for line in lines[i : j + 1])
            blocks.append(Block(BlockKind.TABLE, content, table_format=TableFormat.LATEX))
            i = j + 1
            continue

        if stripped.startswith("<chart>"):
            j = i
            while j < n and "</chart>" not in lines[j]:
                j += 1
            if j >= n:
                raise UnbalancedDelimiter("<chart>", i + 1)
            raw = "\n".join(lines[i : j + 1])
            inner = raw[raw.index("<chart>") + len("<chart>") : raw.index("</chart>")]
            blocks.append(Block(BlockKind.CHART, inner.strip()))
            i = j + 1
            continue

        if stripped.startswith("<table"):
            j = i
            while j < n and "</table>" not in lines[j]:
                j += 1
            if j >= n:
                raise UnbalancedDelimiter("<table>", i + 1)
            content = "\n".join(line.rstrip() for line in lines[i : j + 1])
            blocks.append(Block(BlockKind.TABLE, content, table_format=TableFormat.HTML))
            i = j + 1
            continue

        m = _HEADING_MD.match(stripped)
        if m:
            blocks.append(Block(BlockKind.HEADING, m.group(2), level=len(m.group(1))))
            i += 1
            continue

        m = _HEADING_TEX.match(stripped)
        if m:
            blocks.append(Block(BlockKind.HEADING, m.group(2), level=_TEX_LEVELS[m.group(1)]))
            i += 1
            continue

        if stripped.startswith("|"):
            j = i
            while j < n and lines[j].strip().startswith("|"):
                j += 1
            content = "\n".join(line.rstrip() for line in lines[i:j])
            blocks.append(Block(BlockKind.TABLE, content, table_format=TableFormat.MARKDOWN))
            i = j
            continue

        # plain paragraph: runs until a blank line or the next structure
        j = i
        while j < n and lines[j].strip() and not _is_structure_start(lines[j]):
            j += 1
        blocks.extend(_parse_inline("\n".join(lines[i:j]), i + 1))
        i = j

    return tuple(blocks)


def parse_doc(source: str, doc_id: str, page_no: int, domain: str) -> StructuredDoc:
    blocks = parse_blocks(source)
    if not blocks:
        raise EmptyDocument()
    return StructuredDoc(doc_id=doc_id, page_no=page_no, domain=domain, blocks=blocks)


def serialize_block(block: Block) -> str:
    if block.kind is BlockKind.TEXT:
        return block.content
    if block.kind is BlockKind.HEADING:
        return "#" * block.level + " " + block.content
    if block.kind is BlockKind.INLINE_FORMULA:
        return f"${block.content}$"
    if block.kind is BlockKind.BLOCK_FORMULA:
        if "\n" in block.content:
            return f"$$\n{block.content}\n$$"
        return f"$${block.content}$$"
    if block.kind is BlockKind.TABLE:
        return block.content
    if block.kind is BlockKind.CHART:
        return f"<chart>\n{block.content}\n</chart>"
    raise DocError(f"unknown block kind {block.kind}")


def serialize_doc(doc: StructuredDoc) -> str:
    parts: list[str] = []
    for i, block in enumerate(doc.blocks):
        rendered = serialize_block(block)
        if i > 0 and not block.joined:
            parts.append("\n\n")
        parts.append(rendered)
    return "".join(parts)


def canonical(source: str) -> str:
    """Canonical form of a page source: parse then serialize."""
    return serialize_doc(parse_doc(source, "canon", 1, "Textbook"))


def plain_text_of(doc: StructuredDoc) -> str:
    """Block contents in order, delimiters stripped, one newline between
    blocks. Formula delimiters embedded in raw table/chart cells count as
    delimiters and become spaces."""
    return "\n".join(block.content.replace("$", " ") for block in doc.blocks)


@dataclass(frozen=True)
class QARecord:
    qa_id: str
    doc_id: str
    page_no: int
    question: str
    answers: tuple[str, ...]
    evidence: str
    evidence_source: str
    task: str
    domain: str
    multipage: bool = False
    second_page_no: int | None = None
    answer_format: str = "String"

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError(f"{self.qa_id}: answers must be non-empty")
        if not self.evidence:
            raise ValueError(f"{self.qa_id}: evidence must be non-empty")
        if self.evidence_source not in EVIDENCE_SOURCES:
            raise ValueError(f"{self.qa_id}: bad evidence_source {self.evidence_source!r}")
        if self.task not in TASKS:
            raise ValueError(f"{self.qa_id}: bad task {self.task!r}")
        if self.answer_format not in ANSWER_FORMATS:
            raise ValueError(f"{self.qa_id}: bad answer_format {self.answer_format!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"{self.qa_id}: bad domain {self.domain!r}")
        if self.multipage and self.second_page_no is None:
            raise ValueError(f"{self.qa_id}: multipage QA needs second_page_no")

    @property
    def pages(self) -> tuple[tuple[str, int], ...]:
        keys = [(self.doc_id, self.page_no)]
        if self.second_page_no is not None:
            keys.append((self.doc_id, self.second_page_no))
        return tuple(keys)


# ---------------------------------------------------------------------------
# JSONL corpus / QA I/O.
# Corpus rows: {doc_id, page_no, domain, content} (+passthrough keys).
# QA rows mirror QARecord fields.


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DocError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
    return rows


def write_jsonl(rows: Iterable[Mapping], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(dict(row), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_corpus(path: str | Path) -> list[StructuredDoc]:
    docs = []
    for row in read_jsonl(path):
        docs.append(parse_doc(row["content"], row["doc_id"], int(row["page_no"]), row["domain"]))
    return docs


def save_corpus(docs: Iterable[StructuredDoc], path: str | Path, extra: Mapping | None = None) -> None:
    rows = []
    for doc in docs:
        row = {
            "doc_id": doc.doc_id,
            "page_no": doc.page_no,
            "domain": doc.domain,
            "content": serialize_doc(doc),
        }
        if extra:
            row.update(extra)
        rows.append(row)
    write_jsonl(rows, path)


def load_page_texts(path: str | Path) -> dict[tuple[str, int], str]:
    """Raw page content keyed by (doc_id, page_no), no parsing."""
    return {(r["doc_id"], int(r["page_no"])): r["content"] for r in read_jsonl(path)}


def qa_from_dict(row: Mapping) -> QARecord:
    return QARecord(
        qa_id=row["qa_id"],
        doc_id=row["doc_id"],
        page_no=int(row["page_no"]),
        question=row["question"],
        answers=tuple(row["answers"]),
        evidence=row["evidence"],
        evidence_source=row["evidence_source"],
        task=row["task"],
        domain=row["domain"],
        multipage=bool(row.get("multipage", False)),
        second_page_no=row.get("second_page_no"),
        answer_format=row.get("answer_format", "String"),
    )


def qa_to_dict(qa: QARecord) -> dict:
    row = asdict(qa)
    row["answers"] = list(qa.answers)
    return row


def load_qa(path: str | Path) -> list[QARecord]:
    return [qa_from_dict(row) for row in read_jsonl(path)]


def save_qa(qas: Iterable[QARecord], path: str | Path) -> None:
    write_jsonl((qa_to_dict(qa) for qa in qas), path)
