"""Versioned prompt templates.

The version string of each template is part of every cache key, so editing a
template's wording must come with a version bump.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

JUDGE_VERSION = "judge-v1"
JUDGE_PLAIN_VERSION = "judge-plain-v1"
REASONS_VERSION = "reasons-v1"
SUMMARIZE_VERSION = "summarize-v1"
SCORE_VERSION = "score-v1"
FEW_SHOT_VERSION = "few-shot-v1"
CEFR_VERSION = "cefr-v1"

REPROMPT_LETTER = "Answer with exactly one letter A\u2013E."
REPROMPT_NUMBER = "Reply with the number only."
REPROMPT_LEVEL = "Reply with the level only."
REPROMPT_LIST = "Reply with a numbered list only."

OPTIONS = (
    ("A", "answer i is better than answer j"),
    ("B", "answer i is slightly better than answer j"),
    ("C", "almost the same"),
    ("D", "answer j is slightly better than answer i"),
    ("E", "answer j is better than answer i"),
)


@dataclass(frozen=True)
class Prompt:
    """What a backend is asked.

    ``text`` is what an LLM sees; ``fields`` carries the same content in
    structured form for scripted backends.
    """

    task: str
    text: str
    version: str
    fields: Mapping[str, Any] = field(default_factory=dict)

    def with_suffix(self, suffix: str) -> Prompt:
        return replace(self, text=f"{self.text}\n\n{suffix}")


def _options_block() -> str:
    return "\n".join(f"({label}) {text}" for label, text in OPTIONS)


def judge_prompt(
    question: str,
    answer_a: str,
    answer_b: str,
    criterion: str | None,
    fields: Mapping[str, Any],
) -> Prompt:
    if criterion is None:
        focus = "Decide which answer is better overall."
        version = JUDGE_PLAIN_VERSION
    else:
        focus = f"Compare the two answers only with respect to this criterion: {criterion}"
        version = JUDGE_VERSION
    text = (
        "You are assessing human answers to an open-ended question.\n\n"
        f"Question:\n{question}\n\n"
        f"Answer i:\n{answer_a}\n\n"
        f"Answer j:\n{answer_b}\n\n"
        f"{focus}\n"
        "Choose one option:\n"
        f"{_options_block()}\n\n"
        "Reply with a single letter: A, B, C, D or E."
    )
    return Prompt("judge", text, version, dict(fields))


def reasons_prompt(question: str, first: str, second: str, fields: Mapping[str, Any]) -> Prompt:
    text = (
        f"Question:\n{question}\n\n"
        f"First answer:\n{first}\n\n"
        f"Second answer:\n{second}\n\n"
        "Explain why the first answer is better than the second one. "
        "Summarize 2 or 3 reasons as a numbered list, one short reason per line."
    )
    return Prompt("reasons", text, REASONS_VERSION, dict(fields))


def summarize_prompt(question: str, reasons: Sequence[str], k: int) -> Prompt:
    listing = "\n".join(f"- {r}" for r in reasons)
    text = (
        f"These reasons were given for why one answer to the question below beats another.\n\n"
        f"Question:\n{question}\n\nReasons:\n{listing}\n\n"
        f"Many reasons repeat. Merge duplicates into short evaluation criteria, rank them by "
        f"importance and by how often they occur, and output the top {k} criteria as a numbered "
        f"list, most important first. Output criterion names only."
    )
    return Prompt("summarize", text, SUMMARIZE_VERSION, {"reasons": list(reasons), "k": k})


def score_prompt(question: str, answer: str, fields: Mapping[str, Any]) -> Prompt:
    text = (
        f"Question:\n{question}\n\nAnswer:\n{answer}\n\n"
        "Score this answer on a scale from 0 to 100, where 100 is the best possible answer. "
        "Reply with the number only."
    )
    return Prompt("score", text, SCORE_VERSION, dict(fields))


def few_shot_prompt(
    question: str, answer: str, exemplars: Sequence[tuple[int, str]], n_levels: int, fields: Mapping[str, Any]
) -> Prompt:
    shots = "\n\n".join(f"Example (Level {lvl}):\n{text}" for lvl, text in exemplars)
    text = (
        f"Question:\n{question}\n\n"
        f"Answers are graded on levels 1 to {n_levels}, where {n_levels} is best. Examples:\n\n"
        f"{shots}\n\n"
        f"Answer to grade:\n{answer}\n\n"
        f"Which level (1-{n_levels}) does this answer belong to? Reply as 'Level N'."
    )
    return Prompt("few-shot", text, FEW_SHOT_VERSION, {**fields, "n_levels": n_levels})


def cefr_prompt(question: str, answer: str, definitions: Mapping[str, str], fields: Mapping[str, Any]) -> Prompt:
    defs = "\n".join(f"{label}: {desc}" for label, desc in definitions.items())
    labels = ", ".join(definitions)
    text = (
        f"Question:\n{question}\n\nEssay:\n{answer}\n\n"
        f"Assess the writing of this essay using these CEFR writing level definitions:\n{defs}\n\n"
        f"Which level ({labels}) best describes the writer? Reply with the level label only."
    )
    return Prompt("cefr", text, CEFR_VERSION, {**fields, "labels": list(definitions)})
