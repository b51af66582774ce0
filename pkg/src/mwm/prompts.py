"""Prompt templates for text-guided localization providers.

The toolkit itself never calls a language model; templates are stored
and rendered so bridge processes and experiment configs share one
canonical phrasing.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import MissingSlot

CATEGORY_SLOT = "[category]"
MODALITY_SLOT = "[modality]"

DEFAULT_SENTENCE_TEMPLATE = (
    "Describe the typical visual characteristics of a [category] in a [modality] image"
)


@dataclass(frozen=True)
class PromptTemplate:
    template: str = DEFAULT_SENTENCE_TEMPLATE
    style: str = "sentence"  # "sentence" | "phrase"

    def __post_init__(self):
        if self.style not in ("sentence", "phrase"):
            raise ValueError(f"unknown prompt style {self.style!r}")


def render_prompt(template: PromptTemplate, category: str, modality: str = "") -> str:
    """Substitute the slots; phrase style passes the category through."""
    if template.style == "phrase":
        return category
    text = template.template
    if CATEGORY_SLOT not in text:
        raise MissingSlot(f"sentence template lacks {CATEGORY_SLOT}")
    if MODALITY_SLOT not in text:
        raise MissingSlot(f"sentence template lacks {MODALITY_SLOT}")
    return text.replace(CATEGORY_SLOT, category).replace(MODALITY_SLOT, modality)
