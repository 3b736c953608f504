"""Toolkit for measuring how OCR noise in structured documents degrades
retrieval-augmented generation: document AST, formatting/image noise
injection, retrieval knowledge bases, and stage-level evaluation."""

__version__ = "0.1.0"
