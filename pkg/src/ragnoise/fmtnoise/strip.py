"""Inverse of the formatting-noise rules: remove injected stylistic
commands and normalize structural delimiters so perturbed text can be
compared against the plain text of the original page."""

from __future__ import annotations

import re
from typing import Iterable

from ..docmodel import StructuredDoc, serialize_doc
from .latex import UNICODE_TO_COMMAND
from .rules import FmtRule

_HEADING_MARK = re.compile(r"(?m)^#{1,6} ")

_TITLE_CMDS = ("section", "subsection", "subsubsection")
_STYLE_CMDS = ("textbf", "textit", "underline")
_ALPHABET_CMDS = ("mathbf", "boldsymbol", "mathbb", "pmb", "mathrsfs", "euscript", "mathcal")

_MD_BOLD = re.compile(r"\*\*([^*]+)\*\*", re.DOTALL)
_MD_ITALIC = re.compile(r"(?<!\*)\*([^*]+)\*(?!\*)", re.DOTALL)
_MD_UNDERLINE = re.compile(r"(?<![\w])_([^_]+)_(?![\w])", re.DOTALL)

# Exact inverse of marker insertion: remove the marker text, nothing else
# (the control-space marker is backslash+space, two characters).
_MARKER_RES = (
    re.compile(r"\\qquad(?![a-zA-Z])"),
    re.compile(r"\\quad(?![a-zA-Z])"),
    re.compile(r"(?<!\\)\\;"),
    re.compile(r"(?<!\\)\\:"),
    re.compile(r"(?<!\\)\\ "),
)
_RULE_LINE_RES = (
    re.compile(r"\\hline(?![a-zA-Z])"),
    re.compile(r"\\cline\{\d+-\d+\}"),
)

_UNICODE_TRANSLATION = str.maketrans({u: c for u, c in UNICODE_TO_COMMAND.items()})


def _unwrap_commands(text: str, commands: Iterable[str]) -> str:
    pattern = re.compile(r"\\(?:" + "|".join(commands) + r")\*?\{([^{}]*)\}")
    while True:
        text, n = pattern.subn(r"\1", text)
        if not n:
            return text


def _unwrap_markdown(text: str) -> str:
    while True:
        before = text
        text = _MD_BOLD.sub(r"\1", text)
        text = _MD_ITALIC.sub(r"\1", text)
        text = _MD_UNDERLINE.sub(r"\1", text)
        if text == before:
            return text


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs (including line breaks) to single spaces."""
    return " ".join(text.split())


def strip_formatting(
    doc_or_text: StructuredDoc | str,
    rules: Iterable[FmtRule] | None = None,
) -> str:
    """Remove rule-injected wrappers and markers from a page or raw string.

    Structural delimiters ($ / $$, <chart> tags, heading hashes) always
    normalize away, matching the plain-text form of a document. ``rules``
    restricts removal to the markers of the named rules (default: all).
    """
    if isinstance(doc_or_text, StructuredDoc):
        text = serialize_doc(doc_or_text)
    else:
        text = doc_or_text
    enabled = set(FmtRule) if rules is None else set(rules)

    text = text.replace("<chart>", " ").replace("</chart>", " ")
    text = text.replace("$$", " ").replace("$", " ")
    text = _HEADING_MARK.sub("", text)

    # markers first: they interpose inside subscripts (K\ _m), which would
    # otherwise leave underscores that the markdown pass pairs up wrongly
    if FmtRule.EXTRANEOUS_ELEMENTS in enabled:
        for marker_re in _MARKER_RES:
            text = marker_re.sub("", text)

    unwrap: list[str] = []
    if FmtRule.TITLE_FORMATTING in enabled:
        unwrap.extend(_TITLE_CMDS)
    if FmtRule.TEXT_STYLE in enabled:
        unwrap.extend(_STYLE_CMDS)
    if FmtRule.EQUIVALENT_SYMBOLS in enabled:
        unwrap.extend(_ALPHABET_CMDS)
    if unwrap:
        text = _unwrap_commands(text, unwrap)
    if FmtRule.TEXT_STYLE in enabled:
        text = _unwrap_markdown(text)
    if FmtRule.TABLE_LINES in enabled:
        for rule_re in _RULE_LINE_RES:
            text = rule_re.sub(" ", text)
    if FmtRule.EQUIVALENT_SYMBOLS in enabled:
        text = text.translate(_UNICODE_TRANSLATION)

    return normalize_ws(text)
