"""Formatting-noise injection at a controlled rate.

Every rule draws its selection coin for each candidate from a dedicated
stream seeded by (seed, doc, rule), and pre-draws the cosmetic choices for
every candidate whether or not it is selected. Runs at a lower rate are
therefore pointwise subsets of runs at a higher rate under the same seed,
which is what makes level sweeps comparable.
"""

from __future__ import annotations

import hashlib
import random
import re
import warnings
from dataclasses import dataclass
from enum import Enum

from ..docmodel import Block, BlockKind, StructuredDoc, TableFormat
from .latex import (
    FUSE_SAFE_MARKERS,
    SPACING_MARKERS,
    braces_balanced,
    equivalent_forms,
    tokenize_latex,
)

PAPER_RATES = (0.1, 0.3, 0.6)


class FmtRule(str, Enum):
    TEXT_STYLE = "text_style"
    TITLE_FORMATTING = "title_formatting"
    PARAGRAPH_BREAK = "paragraph_break"
    FORMULA_CONVERSION = "formula_conversion"
    EXTRANEOUS_ELEMENTS = "extraneous_elements"
    EQUIVALENT_SYMBOLS = "equivalent_symbols"
    TABLE_LINES = "table_lines"
    TABLE_CELL_CONTENT = "table_cell_content"


ALL_RULES = frozenset(FmtRule)


class MalformedFormulaWarning(UserWarning):
    pass


class MalformedTableWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FmtPlan:
    """Reproducible formatting-noise configuration.

    ``rate`` is the per-candidate perturbation probability; the bundled
    sweeps use 0.1 / 0.3 / 0.6. ``break_prob`` overrides the per-word-gap
    line-break probability (defaults to ``rate``).
    """

    rate: float
    seed: int
    rules: frozenset[FmtRule] = ALL_RULES
    break_prob: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        object.__setattr__(self, "rules", frozenset(self.rules))

    @property
    def effective_break_prob(self) -> float:
        return self.rate if self.break_prob is None else self.break_prob


def _stream(seed: int, doc: StructuredDoc, label: str) -> random.Random:
    key = f"{seed}|{doc.doc_id}|{doc.page_no}|{label}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# --- plain text ------------------------------------------------------------

_WORD_RE = re.compile(r"\S+")
# Title candidates: sentences starting at a boundary with a capital letter and
# ending at a full stop followed by whitespace (never a decimal point).
_SENTENCE_RE = re.compile(
    r"(?:^|(?<=[.!?] )|(?<=\n))[A-Z][^.!?\n]*?\.(?=\s|$)", re.MULTILINE)
_SINGLE_SPACE_RE = re.compile(r"(?<=\S) (?=\S)")

_STYLE_WRAPPERS = (
    (("**", "**"), ("\\textbf{", "}")),       # bold: markdown / latex
    (("*", "*"), ("\\textit{", "}")),          # italic
    (("_", "_"), ("\\underline{", "}")),       # underline
)
_TITLE_TEX = {1: "section", 2: "subsection", 3: "subsubsection"}


def _apply_edits(text: str, wraps: list[tuple[int, int, str, str]],
                 replacements: dict[int, tuple[int, str]]) -> str:
    opens: dict[int, list[str]] = {}
    closes: dict[int, list[str]] = {}
    for start, end, prefix, _ in sorted(wraps, key=lambda w: (w[0], -w[1])):
        opens.setdefault(start, []).append(prefix)
    for start, end, _, suffix in sorted(wraps, key=lambda w: (w[1], -w[0])):
        closes.setdefault(end, []).append(suffix)
    out: list[str] = []
    i = 0
    while i <= len(text):
        out.extend(closes.get(i, ()))
        out.extend(opens.get(i, ()))
        if i == len(text):
            break
        if i in replacements:
            old_len, new = replacements[i]
            out.append(new)
            i += old_len
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _group_words(spans: list[tuple[int, int]], grp: random.Random) -> list[tuple[int, int]]:
    """Consecutive runs of 2-5 words; a short remainder forms its own item."""
    items = []
    i = 0
    while i < len(spans):
        size = grp.randint(2, 5)
        group = spans[i : i + size]
        items.append((group[0][0], group[-1][1]))
        i += size
    return items


def _style_wraps(content: str, rate: float, sel: random.Random,
                 cho: random.Random, grp: random.Random) -> list[tuple[int, int, str, str]]:
    spans = [(m.start(), m.end()) for m in _WORD_RE.finditer(content)]
    wraps = []
    for start, end in _group_words(spans, grp):
        u = sel.random()
        style = cho.randrange(3)
        syntax = cho.randrange(2)
        if u < rate:
            prefix, suffix = _STYLE_WRAPPERS[style][syntax]
            wraps.append((start, end, prefix, suffix))
    return wraps


def _title_wraps(content: str, rate: float, sel: random.Random,
                 cho: random.Random) -> list[tuple[int, int, str, str]]:
    wraps = []
    for m in _SENTENCE_RE.finditer(content):
        sentence = m.group(0)
        start, end = m.start(), m.end()
        n_words = len(sentence.split())
        u = sel.random()
        level = cho.randint(1, 3)
        syntax = cho.randrange(2)
        if u < rate and 0 < n_words <= 5:
            if syntax == 0:
                wraps.append((start, end, "\n" + "#" * level + " ", "\n"))
            else:
                wraps.append((start, end, "\n\\" + _TITLE_TEX[level] + "{", "}\n"))
    return wraps


def _break_replacements(content: str, prob: float, sel: random.Random) -> dict[int, tuple[int, str]]:
    """Insert a line break at selected word intervals (the space stays)."""
    reps = {}
    for m in _SINGLE_SPACE_RE.finditer(content):
        if sel.random() < prob:
            reps[m.start()] = (1, "\n ")
    return reps


def perturb_text(doc: StructuredDoc, plan: FmtPlan) -> StructuredDoc:
    """Apply the plain-text rules (style wrapping, title promotion, line
    breaks) to every text block."""
    style_on = FmtRule.TEXT_STYLE in plan.rules
    title_on = FmtRule.TITLE_FORMATTING in plan.rules
    break_on = FmtRule.PARAGRAPH_BREAK in plan.rules
    s_sel = _stream(plan.seed, doc, "text_style.sel")
    s_cho = _stream(plan.seed, doc, "text_style.cho")
    s_grp = _stream(plan.seed, doc, "text_style.grp")
    t_sel = _stream(plan.seed, doc, "title.sel")
    t_cho = _stream(plan.seed, doc, "title.cho")
    b_sel = _stream(plan.seed, doc, "break.sel")

    blocks = []
    for block in doc.blocks:
        if block.kind is not BlockKind.TEXT:
            blocks.append(block)
            continue
        wraps: list[tuple[int, int, str, str]] = []
        reps: dict[int, tuple[int, str]] = {}
        if style_on:
            wraps.extend(_style_wraps(block.content, plan.rate, s_sel, s_cho, s_grp))
        if title_on:
            wraps.extend(_title_wraps(block.content, plan.rate, t_sel, t_cho))
        if break_on:
            reps = _break_replacements(block.content, plan.effective_break_prob, b_sel)
        if wraps or reps:
            block = Block(block.kind, _apply_edits(block.content, wraps, reps),
                          joined=block.joined)
        blocks.append(block)
    return StructuredDoc(doc.doc_id, doc.page_no, doc.domain, tuple(blocks))


# --- formulas ---------------------------------------------------------------

_MAX_MARKERS = 5


def _perturb_formula_content(content: str, rate: float,
                             eq_sel: random.Random, eq_cho: random.Random,
                             mk_selected: bool, mk_cho: random.Random) -> str:
    tokens = tokenize_latex(content)
    # per-symbol equivalent substitution
    for i, tok in enumerate(tokens):
        u = eq_sel.random()
        pick = eq_cho.random()
        forms = equivalent_forms(tok)
        if u < rate and forms:
            tokens[i] = forms[int(pick * len(forms)) % len(forms)]
    # meaningless spacing markers at symbol gaps (token boundaries, ends included)
    count = mk_cho.randint(1, _MAX_MARKERS)
    pos_draws = [mk_cho.random() for _ in range(_MAX_MARKERS)]
    kind_draws = [mk_cho.randrange(len(SPACING_MARKERS)) for _ in range(_MAX_MARKERS)]
    gaps = list(range(len(tokens) + 1))
    if mk_selected and gaps:
        chosen = sorted(
            {gaps[int(p * len(gaps)) % len(gaps)] for p in pos_draws[:count]},
            reverse=True,
        )
        for gap, kind in zip(chosen, kind_draws):
            following = tokens[gap][:1] if gap < len(tokens) else ""
            pool = FUSE_SAFE_MARKERS if following.isalpha() else SPACING_MARKERS
            tokens.insert(gap, pool[kind % len(pool)])
    return "".join(tokens)


_FORMULA_KINDS = (BlockKind.INLINE_FORMULA, BlockKind.BLOCK_FORMULA)
_FLIP = {
    BlockKind.INLINE_FORMULA: BlockKind.BLOCK_FORMULA,
    BlockKind.BLOCK_FORMULA: BlockKind.INLINE_FORMULA,
}


def perturb_formula(doc: StructuredDoc, plan: FmtPlan) -> StructuredDoc:
    """Apply the formula rules: inline/block conversion, extraneous spacing
    markers, and equivalent-symbol substitution."""
    convert_on = FmtRule.FORMULA_CONVERSION in plan.rules
    markers_on = FmtRule.EXTRANEOUS_ELEMENTS in plan.rules
    equiv_on = FmtRule.EQUIVALENT_SYMBOLS in plan.rules
    c_sel = _stream(plan.seed, doc, "formula_convert.sel")
    m_sel = _stream(plan.seed, doc, "formula_markers.sel")
    m_cho = _stream(plan.seed, doc, "formula_markers.cho")
    e_sel = _stream(plan.seed, doc, "formula_equiv.sel")
    e_cho = _stream(plan.seed, doc, "formula_equiv.cho")

    blocks = []
    for idx, block in enumerate(doc.blocks):
        if block.kind not in _FORMULA_KINDS:
            blocks.append(block)
            continue
        convert_u = c_sel.random()
        marker_u = m_sel.random()
        if not braces_balanced(block.content):
            warnings.warn(
                f"{doc.doc_id} p{doc.page_no} block {idx}: unbalanced braces, formula skipped",
                MalformedFormulaWarning,
                stacklevel=2,
            )
            blocks.append(block)
            continue
        content = _perturb_formula_content(
            block.content,
            plan.rate if equiv_on else 0.0,
            e_sel,
            e_cho,
            markers_on and marker_u < plan.rate,
            m_cho,
        )
        kind = block.kind
        if convert_on and convert_u < plan.rate:
            kind = _FLIP[kind]
        blocks.append(Block(kind, content, joined=block.joined))
    return StructuredDoc(doc.doc_id, doc.page_no, doc.domain, tuple(blocks))


# --- tables -----------------------------------------------------------------

_TABULAR_RE = re.compile(r"\\begin\{tabular\}\s*(\{[^{}]*\})?")


def _split_top_level(text: str, sep: str) -> list[str]:
    parts = []
    depth = 0
    current = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if depth == 0 and text.startswith(sep, i):
            parts.append("".join(current))
            current = []
            i += len(sep)
            continue
        current.append(ch)
        i += 1
    parts.append("".join(current))
    return parts


def _perturb_cell(cell: str, rate: float, rng: random.Random) -> str:
    lead = len(cell) - len(cell.lstrip())
    trail = len(cell.rstrip())
    core = cell[lead:trail]
    if not core:
        return cell
    if "$" in core:
        pieces = core.split("$")
        # odd indices are math segments of $...$ pairs
        for i in range(1, len(pieces), 2):
            pieces[i] = _perturb_formula_content(
                pieces[i], rate, rng, rng, rng.random() < rate, rng)
        core = "$".join(pieces)
    else:
        sel = random.Random(rng.random())
        cho = random.Random(rng.random())
        grp = random.Random(rng.random())
        core = _apply_edits(core, _style_wraps(core, rate, sel, cho, grp), {})
    return cell[:lead] + core + cell[trail:]


def perturb_table(doc: StructuredDoc, plan: FmtPlan) -> StructuredDoc:
    """Apply the table rules: random \\hline / \\cline at row boundaries and
    re-perturbation of cell contents. Only LaTeX tables are touched."""
    lines_on = FmtRule.TABLE_LINES in plan.rules
    cells_on = FmtRule.TABLE_CELL_CONTENT in plan.rules

    blocks = []
    for idx, block in enumerate(doc.blocks):
        if block.kind is not BlockKind.TABLE or block.table_format is not TableFormat.LATEX:
            blocks.append(block)
            continue
        m = _TABULAR_RE.search(block.content)
        end = block.content.rfind("\\end{tabular}")
        if not m or end == -1 or end < m.end():
            warnings.warn(
                f"{doc.doc_id} p{doc.page_no} block {idx}: no tabular body, table skipped",
                MalformedTableWarning,
                stacklevel=2,
            )
            blocks.append(block)
            continue
        head, body, tail = block.content[: m.end()], block.content[m.end() : end], block.content[end:]
        rows = _split_top_level(body, "\\\\")
        ncols = max(1, len(_split_top_level(rows[0], "&"))) if rows else 1

        if cells_on:
            c_sel = _stream(plan.seed, doc, f"table_cells.{idx}.sel")
            new_rows = []
            for ri, row in enumerate(rows):
                cells = _split_top_level(row, "&")
                out_cells = []
                for ci, cell in enumerate(cells):
                    u = c_sel.random()
                    if u < plan.rate and cell.strip():
                        rng = _stream(plan.seed, doc, f"table_cell.{idx}.{ri}.{ci}")
                        cell = _perturb_cell(cell, plan.rate, rng)
                    out_cells.append(cell)
                new_rows.append("&".join(out_cells))
            rows = new_rows

        if lines_on and len(rows) > 1:
            l_sel = _stream(plan.seed, doc, f"table_lines.{idx}.sel")
            l_cho = _stream(plan.seed, doc, f"table_lines.{idx}.cho")
            out_rows = [rows[0]]
            for row in rows[1:]:
                u = l_sel.random()
                use_cline = l_cho.randrange(2)
                p1 = l_cho.random()
                p2 = l_cho.random()
                if u < plan.rate:
                    if use_cline:
                        lo = 1 + int(p1 * ncols) % ncols
                        hi = lo + int(p2 * (ncols - lo + 1)) % (ncols - lo + 1)
                        cmd = f"\\cline{{{lo}-{hi}}}"
                    else:
                        cmd = "\\hline"
                    row = "\n" + cmd + row
                out_rows.append(row)
            rows = out_rows

        blocks.append(Block(BlockKind.TABLE, head + "\\\\".join(rows) + tail,
                            table_format=TableFormat.LATEX, joined=block.joined))
    return StructuredDoc(doc.doc_id, doc.page_no, doc.domain, tuple(blocks))


def perturb_doc(doc: StructuredDoc, plan: FmtPlan) -> StructuredDoc:
    """All enabled formatting-noise rules, in a fixed order."""
    return perturb_table(perturb_formula(perturb_text(doc, plan), plan), plan)
