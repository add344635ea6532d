"""Pairwise judgments: requests, parsed records, and output parsing."""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Any

from .backends import Backend
from .dataset import sha256_json
from .errors import ParseFailureError
from .prompts import OPTIONS, REPROMPT_LETTER, Prompt, judge_prompt
from .scale import JudgmentScale

__all__ = [
    "JudgmentScale",
    "JudgeRequest",
    "JudgeRecord",
    "parse_judgment",
    "compare",
    "render",
]

MAX_REPROMPTS = 2


@dataclass(frozen=True)
class JudgeRequest:
    question: str
    answer_a: str
    answer_b: str
    pair: tuple[str, str]
    criterion: str | None = None
    # Routing hint for scripted backends; not part of the cache identity.
    criterion_index: int | None = None

    def __post_init__(self) -> None:
        if self.pair[0] == self.pair[1]:
            raise ValueError(f"cannot compare response {self.pair[0]!r} with itself")
        if not self.answer_a.strip() or not self.answer_b.strip() or not self.question.strip():
            raise ValueError("question and answers must be non-empty")
        if self.criterion is not None and not self.criterion.strip():
            raise ValueError("criterion must be non-empty when given")

    def digest(self, version: str) -> str:
        return sha256_json(
            {
                "v": version,
                "criterion": self.criterion,
                "question": self.question,
                "a": self.answer_a,
                "b": self.answer_b,
                "pair": list(self.pair),
            }
        )


@dataclass(frozen=True)
class JudgeRecord:
    request_digest: str
    backend_id: str
    model_id: str
    raw: str
    parsed: JudgmentScale
    timestamp: str
    attempts: int = 1
    tokens: int | None = None
    criterion: str | None = None
    pair: tuple[str, str] = ("", "")

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["parsed"] = self.parsed.value
        d["pair"] = list(self.pair)
        return d

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> JudgeRecord:
        d = dict(d)
        d["parsed"] = JudgmentScale(d["parsed"])
        d["pair"] = tuple(d.get("pair", ("", "")))
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def render(request: JudgeRequest) -> Prompt:
    return judge_prompt(
        request.question,
        request.answer_a,
        request.answer_b,
        request.criterion,
        {
            "criterion": request.criterion,
            "criterion_index": request.criterion_index,
            "id_a": request.pair[0],
            "id_b": request.pair[1],
        },
    )


# --- parsing -----------------------------------------------------------------

_SOLE_LETTER = re.compile(r"^\W*([A-Ea-e])\W*$")
_LABEL_PATTERNS = (
    re.compile(r"\b(?:answer|option|choice|verdict|selection)\s*(?:is\s*)?[:=]\s*\(?(?-i:([A-E]))\b", re.I),
    re.compile(r"\(([A-E])\)"),
    re.compile(r"\b(?i:option|choice)\s+\(?([A-E])\b"),
    re.compile(r"^\s*\**([A-E])\**\s*[.):]", re.M),
)

_FIRST = (
    "answer i", "the first answer", "first answer", "answer 1", "answer one", "the first response",
    "first response", "response 1", "the first one", "the former", "the first",
)
_SECOND = (
    "answer j", "the second answer", "second answer", "answer 2", "answer two", "the second response",
    "second response", "response 2", "the second one", "the latter", "the second",
)
_SLIGHT = ("slightly", "marginally", "a bit", "a little", "somewhat", "a little bit")
_MUCH = ("", "much", "clearly", "significantly", "considerably", "far", "substantially")
_TIE = (
    "almost the same", "about the same", "roughly the same", "more or less the same", "essentially the same",
    "nearly the same", "basically the same", "roughly equal", "about equal", "equally good", "equal quality",
    "of similar quality", "comparable quality", "neither is better", "neither answer is better",
    "no meaningful difference", "no significant difference", "it is a tie", "a tie",
)


def _phrase_table() -> dict[str, JudgmentScale]:
    table: dict[str, JudgmentScale] = {}
    for subjects, much, slight in (
        (_FIRST, JudgmentScale.FIRST_MUCH_BETTER, JudgmentScale.FIRST_SLIGHTLY_BETTER),
        (_SECOND, JudgmentScale.SECOND_MUCH_BETTER, JudgmentScale.SECOND_SLIGHTLY_BETTER),
    ):
        for s in subjects:
            for verb in ("is", "was", "seems", "appears"):
                for adv in _MUCH:
                    table[f"{s} {verb} {adv} better".replace("  ", " ")] = much
                for adv in _SLIGHT:
                    table[f"{s} {verb} {adv} better"] = slight
    for label, text in OPTIONS:
        table[text] = JudgmentScale.from_label(label)
    for t in _TIE:
        table[t] = JudgmentScale.TIE
    return table


PHRASES = _phrase_table()


def _normalise(text: str) -> str:
    return " ".join(re.sub(r"[^a-z0-9 ]+", " ", text.lower()).split())


def parse_judgment(raw: str) -> JudgmentScale:
    """Map backend output to a judgment: option letter first, then the longest known phrase.

    Phrases that are not part of one another but point to different options
    make the reply ambiguous.
    """
    m = _SOLE_LETTER.match(raw)
    if m:
        return JudgmentScale.from_label(m.group(1))
    for pat in _LABEL_PATTERNS:
        m = pat.search(raw)
        if m:
            return JudgmentScale.from_label(m.group(1))
    text = f" {_normalise(raw)} "
    found = {phrase: variant for phrase, variant in PHRASES.items() if f" {phrase} " in text}
    # a phrase contained in a longer match is part of it, not separate evidence
    maximal = {v for p, v in found.items() if not any(p != q and p in q for q in found)}
    if len(maximal) == 1:
        return maximal.pop()
    if maximal:
        raise ParseFailureError("ambiguous judgment", raw)
    raise ParseFailureError("no recognisable option", raw)


def mirror_phrase(text: str) -> str:
    """Swap the roles of the two answers in an option phrase."""
    swapped = text.replace("answer i", "\0").replace("answer j", "answer i").replace("\0", "answer j")
    return swapped


# --- comparison --------------------------------------------------------------


def compare(backend: Backend, request: JudgeRequest, *, max_reprompts: int = MAX_REPROMPTS) -> JudgeRecord:
    """Ask ``backend`` for one judgment, re-prompting when the reply cannot be parsed."""
    prompt = render(request)
    attempts = 0
    tokens = 0
    last_raw = ""
    for round_ in range(max_reprompts + 1):
        out = backend.complete(prompt if round_ == 0 else prompt.with_suffix(REPROMPT_LETTER))
        attempts += out.attempts
        tokens += out.tokens or 0
        last_raw = out.text
        try:
            parsed = parse_judgment(out.text)
        except ParseFailureError:
            continue
        return JudgeRecord(
            request_digest=request.digest(prompt.version),
            backend_id=backend.backend_id,
            model_id=backend.model_id,
            raw=out.text,
            parsed=parsed,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            attempts=attempts,
            tokens=tokens or None,
            criterion=request.criterion,
            pair=tuple(request.pair),
        )
    raise ParseFailureError(f"unparseable judgment after {max_reprompts + 1} tries", last_raw)
