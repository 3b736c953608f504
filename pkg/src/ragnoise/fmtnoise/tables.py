"""Convert table blocks among LaTeX, Markdown and HTML.

Tables are normalized through a cell grid (text + column span per cell);
conversion between formats that support spans (LaTeX, HTML) is exact, while
Markdown flattens merged cells into the first column and warns.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from html.parser import HTMLParser

from ..docmodel import Block, BlockKind, TableFormat
from .rules import _split_top_level


class UnsupportedStructure(ValueError):
    """Table cannot be represented in the requested format."""


class MergedCellsMarkdownWarning(UserWarning):
    """Merged cells flattened on conversion to Markdown."""


@dataclass(frozen=True)
class Cell:
    text: str
    colspan: int = 1


Grid = list[list[Cell]]

_TABULAR_BODY = re.compile(
    r"\\begin\{tabular\}\s*(?:\{[^{}]*\})?(.*)\\end\{tabular\}", re.DOTALL
)
_RULE_CMDS = re.compile(r"\\(?:hline|toprule|midrule|bottomrule)(?![a-zA-Z])|\\cline\{\d+-\d+\}")
_MULTICOLUMN = re.compile(r"^\\multicolumn\{(\d+)\}\{[^{}]*\}\{(.*)\}$", re.DOTALL)


def grid_width(grid: Grid) -> int:
    if not grid:
        return 0
    widths = {sum(cell.colspan for cell in row) for row in grid}
    if len(widths) != 1:
        raise UnsupportedStructure(f"inconsistent row widths: {sorted(widths)}")
    return widths.pop()


def _parse_latex(content: str) -> Grid:
    m = _TABULAR_BODY.search(content)
    if not m:
        raise UnsupportedStructure("no tabular environment found")
    body = _RULE_CMDS.sub(" ", m.group(1))
    grid: Grid = []
    for raw_row in _split_top_level(body, "\\\\"):
        if not raw_row.strip():
            continue
        row = []
        for raw_cell in _split_top_level(raw_row, "&"):
            cell = raw_cell.strip()
            mc = _MULTICOLUMN.match(cell)
            if mc:
                row.append(Cell(mc.group(2).strip(), int(mc.group(1))))
            else:
                row.append(Cell(cell))
        grid.append(row)
    if not grid:
        raise UnsupportedStructure("empty table body")
    return grid


def _render_latex(grid: Grid) -> str:
    width = grid_width(grid)
    lines = ["\\begin{table}", "\\begin{tabular}{" + "c" * width + "}"]
    for row in grid:
        cells = []
        for cell in row:
            if cell.colspan > 1:
                cells.append(f"\\multicolumn{{{cell.colspan}}}{{c}}{{{cell.text}}}")
            else:
                cells.append(cell.text)
        lines.append(" & ".join(cells) + " \\\\")
    lines.append("\\end{tabular}")
    lines.append("\\end{table}")
    return "\n".join(lines)


class _HTMLTableParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__()
        self.grid: Grid = []
        self._row: list[Cell] | None = None
        self._cell_parts: list[str] | None = None
        self._colspan = 1

    def handle_starttag(self, tag, attrs):
        if tag == "tr":
            self._row = []
        elif tag in ("td", "th"):
            self._colspan = 1
            for name, value in attrs:
                if name == "colspan" and value:
                    self._colspan = int(value)
            self._cell_parts = []

    def handle_endtag(self, tag):
        if tag in ("td", "th") and self._cell_parts is not None:
            text = "".join(self._cell_parts).strip()
            if self._row is not None:
                self._row.append(Cell(text, self._colspan))
            self._cell_parts = None
        elif tag == "tr" and self._row is not None:
            self.grid.append(self._row)
            self._row = None

    def handle_data(self, data):
        if self._cell_parts is not None:
            self._cell_parts.append(data)


def _parse_html(content: str) -> Grid:
    parser = _HTMLTableParser()
    parser.feed(content)
    if not parser.grid:
        raise UnsupportedStructure("no table rows found in HTML")
    return parser.grid


def _render_html(grid: Grid) -> str:
    grid_width(grid)
    lines = ["<table>"]
    for row in grid:
        cells = []
        for cell in row:
            attr = f' colspan="{cell.colspan}"' if cell.colspan > 1 else ""
            cells.append(f"<td{attr}>{cell.text}</td>")
        lines.append("<tr>" + "".join(cells) + "</tr>")
    lines.append("</table>")
    return "\n".join(lines)


_MD_SEPARATOR = re.compile(r"^:?-+:?$")


def _parse_markdown(content: str) -> Grid:
    grid: Grid = []
    for line in content.splitlines():
        line = line.strip()
        if not line.startswith("|"):
            continue
        cells = [c.strip() for c in line.strip("|").split("|")]
        if cells and all(_MD_SEPARATOR.match(c) for c in cells if c):
            continue
        grid.append([Cell(c) for c in cells])
    if not grid:
        raise UnsupportedStructure("no pipe rows found in Markdown")
    return grid


def _render_markdown(grid: Grid) -> str:
    width = grid_width(grid)
    if any(cell.colspan > 1 for row in grid for cell in row):
        warnings.warn(
            "merged cells are not representable in Markdown; "
            "content kept in the first spanned column",
            MergedCellsMarkdownWarning,
            stacklevel=3,
        )
    lines = []
    for i, row in enumerate(grid):
        flat: list[str] = []
        for cell in row:
            flat.append(cell.text)
            flat.extend([""] * (cell.colspan - 1))
        lines.append("| " + " | ".join(flat) + " |")
        if i == 0:
            lines.append("|" + "|".join([" --- "] * width) + "|")
    return "\n".join(lines)


_PARSERS = {
    TableFormat.LATEX: _parse_latex,
    TableFormat.HTML: _parse_html,
    TableFormat.MARKDOWN: _parse_markdown,
}
_RENDERERS = {
    TableFormat.LATEX: _render_latex,
    TableFormat.HTML: _render_html,
    TableFormat.MARKDOWN: _render_markdown,
}


def table_grid(block: Block) -> Grid:
    if block.kind is not BlockKind.TABLE:
        raise UnsupportedStructure(f"not a table block: {block.kind}")
    return _PARSERS[block.table_format](block.content)


def render_grid(grid: Grid, target: TableFormat) -> str:
    return _RENDERERS[target](grid)


def convert_table(block: Block, target: TableFormat) -> Block:
    """Re-render a table block in the target syntax with the same cell grid."""
    target = TableFormat(target)
    grid = table_grid(block)
    return Block(BlockKind.TABLE, render_grid(grid, target),
                 table_format=target, joined=block.joined)
