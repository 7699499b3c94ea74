from __future__ import annotations

import json

import pytest

from qexkit.corpus_io import ExemplarPair
from qexkit.prompts import (
    DEFAULT_TEMPLATES,
    ChatMessage,
    GenerationConfig,
    PromptBudgetError,
    PromptTemplates,
    build_expansion_prompt,
    build_refine_prompt,
    estimate_messages,
    estimate_tokens,
    truncate_words,
)


def _exemplars(n, passage_words=10):
    return [
        ExemplarPair(f"example query {i}", " ".join(f"w{i}_{j}" for j in range(passage_words)))
        for i in range(n)
    ]


class TestExpansionPrompt:
    def test_zero_shot_two_messages(self):
        messages = build_expansion_prompt("what is heat", [])
        assert [m.role for m in messages] == ["system", "user"]
        assert "what is heat" in messages[-1].content

    def test_four_exemplars_ten_messages(self):
        messages = build_expansion_prompt("q", _exemplars(4))
        assert len(messages) == 10
        assert [m.role for m in messages] == (
            ["system"] + ["user", "assistant"] * 4 + ["user"]
        )

    def test_passage_truncated_to_60_words(self):
        pair = ExemplarPair("q", " ".join(f"w{i}" for i in range(100)))
        messages = build_expansion_prompt("test", [pair])
        assistant = messages[2]
        assert assistant.role == "assistant"
        assert len(assistant.content.split()) == 60

    def test_budget_drops_exemplars_from_end(self):
        exemplars = _exemplars(4, passage_words=60)
        full = build_expansion_prompt("q", exemplars, budget=10_000)
        assert len(full) == 10
        # tight budget: roughly two exemplars' worth
        tight = build_expansion_prompt("q", exemplars, budget=250)
        assert len(tight) < 10
        kept = (len(tight) - 2) // 2
        # the kept exemplars are the leading ones
        for i in range(kept):
            assert exemplars[i].query_text in tight[1 + 2 * i].content
        assert "q" in tight[-1].content  # test query survives

    def test_query_alone_over_budget(self):
        with pytest.raises(PromptBudgetError):
            build_expansion_prompt(" ".join(["word"] * 100), [], budget=50)

    def test_pure(self):
        exemplars = _exemplars(2)
        assert build_expansion_prompt("q", exemplars) == build_expansion_prompt("q", exemplars)


class TestRefinePrompt:
    def test_two_messages(self):
        messages = build_refine_prompt("q", "expansion one", "expansion two")
        assert [m.role for m in messages] == ["system", "user"]

    def test_identical_expansions_both_present(self):
        messages = build_refine_prompt("q", "same text", "same text")
        assert messages[1].content.count("same text") == 2

    def test_swap_changes_labels_not_count(self):
        ab = build_refine_prompt("q", "first", "second")
        ba = build_refine_prompt("q", "second", "first")
        assert len(ab) == len(ba) == 2
        assert "Expansion A: first" in ab[1].content
        assert "Expansion A: second" in ba[1].content

    def test_empty_expansion_rejected(self):
        with pytest.raises(ValueError):
            build_refine_prompt("q", "", "x")


class TestTokenEstimate:
    def test_empty_text(self):
        assert estimate_tokens("") == 0

    def test_hundred_words(self):
        assert estimate_tokens(" ".join(["w"] * 100)) == 150

    def test_framing_per_message(self):
        msgs = [ChatMessage("system", ""), ChatMessage("user", " ".join(["w"] * 10))]
        assert estimate_messages(msgs) == 4 + (4 + 15)

    def test_overestimates_whitespace_tokens(self):
        text = "some plain words without subword splits"
        assert estimate_tokens(text) >= len(text.split())


class TestTemplates:
    def test_override_file(self, tmp_path):
        data = {
            "expansion_system": "SYS",
            "exemplar_user": "EX {query}",
            "exemplar_assistant": "{passage}",
            "test_user": "ASK {query}",
            "refine_system": "RSYS",
            "refine_user": "R {query} A {expansion_a} B {expansion_b}",
        }
        path = tmp_path / "templates.json"
        path.write_text(json.dumps(data))
        templates = PromptTemplates.load(path)
        messages = build_expansion_prompt("hi", [], templates=templates)
        assert messages[0].content == "SYS"
        assert messages[1].content == "ASK hi"

    def test_extract_query_expansion_turn(self):
        content = DEFAULT_TEMPLATES.test_user.format(query="what is heat")
        assert DEFAULT_TEMPLATES.extract_query(content) == "what is heat"

    def test_extract_query_refine_turn(self):
        content = DEFAULT_TEMPLATES.refine_user.format(
            query="what is heat", expansion_a="aaa", expansion_b="bbb"
        )
        assert DEFAULT_TEMPLATES.extract_query(content) == "what is heat"

    def test_extract_query_no_match(self):
        assert DEFAULT_TEMPLATES.extract_query("free-form text") is None


class TestTypes:
    def test_truncate_words_short_text(self):
        assert truncate_words("one two", 60) == "one two"

    def test_empty_user_message_rejected(self):
        with pytest.raises(ValueError):
            ChatMessage("user", "")

    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            ChatMessage("tool", "x")

    def test_generation_config_validation(self):
        with pytest.raises(ValueError):
            GenerationConfig(max_new_tokens=0)
        config = GenerationConfig()
        assert (config.max_new_tokens, config.num_beams) == (64, 4)
        assert (config.no_repeat_ngram, config.context_budget_tokens) == (2, 1024)
