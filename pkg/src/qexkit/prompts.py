"""Chat prompt assembly for expansion generation and refinement.

Template strings live in data/templates.json and can be overridden from
a user-supplied file, so prompt ablations need no code change. Prompt
building is pure: the same inputs always produce byte-identical
messages.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus_io import ExemplarPair

PASSAGE_WORD_CAP = 60
_FRAMING_TOKENS_PER_MESSAGE = 4

ROLES = ("system", "user", "assistant")


class PromptBudgetError(ValueError):
    """The test query alone does not fit the context budget."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 64
    num_beams: int = 4
    repetition_penalty: float = 1.1
    no_repeat_ngram: int = 2
    context_budget_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.context_budget_tokens < 1:
            raise ValueError("context_budget_tokens must be >= 1")


REFINE_MAX_NEW_TOKENS = 128


@dataclass(frozen=True)
class PromptTemplates:
    expansion_system: str
    exemplar_user: str
    exemplar_assistant: str
    test_user: str
    refine_system: str
    refine_user: str

    @classmethod
    def load(cls, path: Path | str) -> "PromptTemplates":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**obj)

    def extract_query(self, content: str) -> str | None:
        """Recover the raw query from a templated user turn, if it matches."""
        for template in (self.test_user, self.refine_user):
            pattern = _template_regex(template)
            match = pattern.match(content)
            if match:
                return match.group("query")
        return None


def _template_regex(template: str) -> re.Pattern[str]:
    out: list[str] = []
    pos = 0
    for m in re.finditer(r"\{(\w+)\}", template):
        out.append(re.escape(template[pos : m.start()]))
        name = m.group(1)
        out.append(f"(?P<{name}>.*?)" if name == "query" else "(?s:.*?)")
        pos = m.end()
    out.append(re.escape(template[pos:]))
    return re.compile("".join(out) + r"\Z", re.DOTALL)


def _load_default_templates() -> PromptTemplates:
    data = resources.files("qexkit.data").joinpath("templates.json").read_text("utf-8")
    return PromptTemplates(**json.loads(data))


DEFAULT_TEMPLATES = _load_default_templates()


def load_fixed_exemplars(path: Path | str | None = None) -> list[ExemplarPair]:
    """Fixed shared demonstrations for the few-shot baseline."""
    if path is None:
        data = resources.files("qexkit.data").joinpath("fixed_exemplars.json").read_text("utf-8")
    else:
        data = Path(path).read_text(encoding="utf-8")
    return [
        ExemplarPair(query_text=obj["query"], passage_text=obj["passage"])
        for obj in json.loads(data)
    ]


def truncate_words(text: str, cap: int = PASSAGE_WORD_CAP) -> str:
    words = text.split()
    return " ".join(words[:cap])


def estimate_tokens(text: str) -> int:
    """Deterministic overestimate: 1.5 tokens per whitespace word."""
    return math.ceil(1.5 * len(text.split()))


def estimate_messages(messages: Sequence[ChatMessage]) -> int:
    """Prompt-size estimate including per-message chat framing."""
    return sum(_FRAMING_TOKENS_PER_MESSAGE + estimate_tokens(m.content) for m in messages)


def build_expansion_prompt(
    query_text: str,
    exemplars: Sequence[ExemplarPair],
    budget: int = GenerationConfig().context_budget_tokens,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> list[ChatMessage]:
    """System turn, demonstration turns, then the test query.

    Demonstration passages are truncated to their first 60 words. If the
    estimate exceeds the budget, exemplars are dropped from the end; the
    system message and the test query are never dropped.
    """
    head = ChatMessage("system", templates.expansion_system)
    tail = ChatMessage("user", templates.test_user.format(query=query_text))
    kept = list(exemplars)
    while True:
        messages = [head]
        for pair in kept:
            messages.append(
                ChatMessage("user", templates.exemplar_user.format(query=pair.query_text))
            )
            messages.append(
                ChatMessage(
                    "assistant",
                    templates.exemplar_assistant.format(
                        passage=truncate_words(pair.passage_text)
                    ),
                )
            )
        messages.append(tail)
        if estimate_messages(messages) <= budget:
            return messages
        if not kept:
            raise PromptBudgetError(
                f"query alone exceeds the {budget}-token context budget"
            )
        kept.pop()


def build_refine_prompt(
    query_text: str,
    expansion_a: str,
    expansion_b: str,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> list[ChatMessage]:
    """Two messages asking the refiner to consolidate two expansions."""
    if not expansion_a or not expansion_b:
        raise ValueError("both expansions must be non-empty")
    return [
        ChatMessage("system", templates.refine_system),
        ChatMessage(
            "user",
            templates.refine_user.format(
                query=query_text, expansion_a=expansion_a, expansion_b=expansion_b
            ),
        ),
    ]
