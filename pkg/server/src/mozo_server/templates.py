"""Prompt templates rendered server-side.

A template has a zero-shot form (query only) and a one-shot form (one
demonstration followed by the query); which one applies is decided by whether
the request carries a demonstration. Generated prefix tokens are NOT part of
the template: the server appends ``prefix_token_ids`` verbatim after the
rendered prompt's token sequence, and advertises that rule in the
/v1/model metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["PromptTemplate", "TEMPLATES", "render"]


@dataclass(frozen=True)
class PromptTemplate:
    zero_shot: str
    one_shot: str


TEMPLATES: dict[str, PromptTemplate] = {
    "default": PromptTemplate(
        zero_shot="Input: {query}\nOutput:",
        one_shot="Input: {input}\nOutput: {output}\n\nInput: {query}\nOutput:",
    ),
    "instruct": PromptTemplate(
        zero_shot="Answer the query.\n\nQuery: {query}\nAnswer:",
        one_shot=(
            "Answer the query like the example.\n\n"
            "Query: {input}\nAnswer: {output}\n\nQuery: {query}\nAnswer:"
        ),
    ),
}


def render(template_id: str, demonstration: dict | None, query_text: str) -> str:
    """Rendered prompt text; raises KeyError for an unknown template id."""
    template = TEMPLATES[template_id]
    if demonstration is None:
        return template.zero_shot.format(query=query_text)
    return template.one_shot.format(
        input=demonstration["input"], output=demonstration["output"], query=query_text
    )
