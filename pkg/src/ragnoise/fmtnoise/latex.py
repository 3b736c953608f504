"""Minimal LaTeX tokenizer and the symbol-equivalence tables used by the
formula perturbation rules and their inverse stripping."""

from __future__ import annotations

import re

# Commands, control symbols, whitespace runs, or single characters.
# "".join(tokenize_latex(s)) == s for any s.
_TOKEN_RE = re.compile(r"\\[a-zA-Z]+|\\.|\s+|.", re.DOTALL)


def tokenize_latex(source: str) -> list[str]:
    return _TOKEN_RE.findall(source)


def braces_balanced(source: str) -> bool:
    depth = 0
    for tok in tokenize_latex(source):
        if tok == "{":
            depth += 1
        elif tok == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


BOLD_COMMANDS = (r"\mathbf", r"\boldsymbol")
CURSIVE_COMMANDS = (r"\mathbb", r"\pmb", r"\mathrsfs", r"\euscript", r"\mathcal")

# The bare-backslash marker is the control space "\ " (two characters).
# \quad and \qquad would fuse with a following letter, so insertion sites
# for them are restricted; the control-symbol markers are safe anywhere.
SPACING_MARKERS = ("\\ ", r"\quad", r"\qquad", r"\;", r"\:")
FUSE_SAFE_MARKERS = ("\\ ", r"\;", r"\:")

# Fixed subset of the unicode/LaTeX equivalences: full Greek alphabet plus
# common operators. Canonical direction for stripping is unicode -> command.
COMMAND_TO_UNICODE = {
    r"\alpha": "α", r"\beta": "β", r"\gamma": "γ", r"\delta": "δ",
    r"\epsilon": "ε", r"\zeta": "ζ", r"\eta": "η", r"\theta": "θ",
    r"\iota": "ι", r"\kappa": "κ", r"\lambda": "λ", r"\mu": "μ",
    r"\nu": "ν", r"\xi": "ξ", r"\pi": "π", r"\rho": "ρ",
    r"\sigma": "σ", r"\tau": "τ", r"\upsilon": "υ", r"\phi": "φ",
    r"\chi": "χ", r"\psi": "ψ", r"\omega": "ω",
    r"\Gamma": "Γ", r"\Delta": "Δ", r"\Theta": "Θ", r"\Lambda": "Λ",
    r"\Xi": "Ξ", r"\Pi": "Π", r"\Sigma": "Σ", r"\Upsilon": "Υ",
    r"\Phi": "Φ", r"\Psi": "Ψ", r"\Omega": "Ω",
    r"\infty": "∞", r"\pm": "±", r"\times": "×", r"\div": "÷",
    r"\leq": "≤", r"\geq": "≥", r"\neq": "≠", r"\approx": "≈",
    r"\in": "∈", r"\subset": "⊂", r"\cup": "∪", r"\cap": "∩",
    r"\rightarrow": "→", r"\leftarrow": "←", r"\Rightarrow": "⇒",
    r"\partial": "∂", r"\nabla": "∇", r"\forall": "∀", r"\exists": "∃",
    r"\cdot": "·", r"\sum": "∑", r"\prod": "∏", r"\int": "∫", r"\ell": "ℓ",
}
UNICODE_TO_COMMAND = {u: c for c, u in COMMAND_TO_UNICODE.items()}


def equivalent_forms(token: str) -> tuple[str, ...]:
    """Interchangeable spellings of a token under the equivalence tables,
    excluding the token itself; empty when the token is not substitutable."""
    if token in BOLD_COMMANDS:
        return tuple(t for t in BOLD_COMMANDS if t != token)
    if token in CURSIVE_COMMANDS:
        return tuple(t for t in CURSIVE_COMMANDS if t != token)
    if token in COMMAND_TO_UNICODE:
        return (COMMAND_TO_UNICODE[token],)
    if token in UNICODE_TO_COMMAND:
        return (UNICODE_TO_COMMAND[token],)
    return ()
