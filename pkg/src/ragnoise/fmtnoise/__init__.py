"""Formatting noise: controlled stylistic perturbation of structured pages,
its inverse stripping, and table format conversion."""

from .latex import (
    BOLD_COMMANDS,
    COMMAND_TO_UNICODE,
    CURSIVE_COMMANDS,
    SPACING_MARKERS,
    UNICODE_TO_COMMAND,
    tokenize_latex,
)
from .rules import (
    ALL_RULES,
    PAPER_RATES,
    FmtPlan,
    FmtRule,
    MalformedFormulaWarning,
    MalformedTableWarning,
    perturb_doc,
    perturb_formula,
    perturb_table,
    perturb_text,
)
from .strip import normalize_ws, strip_formatting
from .tables import (
    Cell,
    MergedCellsMarkdownWarning,
    UnsupportedStructure,
    convert_table,
    grid_width,
    render_grid,
    table_grid,
)

__all__ = [
    "ALL_RULES",
    "BOLD_COMMANDS",
    "COMMAND_TO_UNICODE",
    "CURSIVE_COMMANDS",
    "Cell",
    "FmtPlan",
    "FmtRule",
    "MalformedFormulaWarning",
    "MalformedTableWarning",
    "MergedCellsMarkdownWarning",
    "PAPER_RATES",
    "SPACING_MARKERS",
    "UNICODE_TO_COMMAND",
    "UnsupportedStructure",
    "convert_table",
    "grid_width",
    "normalize_ws",
    "perturb_doc",
    "perturb_formula",
    "perturb_table",
    "perturb_text",
    "render_grid",
    "strip_formatting",
    "table_grid",
    "tokenize_latex",
]
