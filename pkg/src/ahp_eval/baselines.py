"""Single-prompt comparison methods: plain pairwise, 0-100 scoring, few-shot levels, CEFR levels."""

from __future__ import annotations

import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import ahp
from .ahp import _natural_key
from .backends import DEFAULT_CEFR_BRACKET, Backend
from .cache import JudgmentCache, cache_key
from .dataset import LEVELS, RANKING, ResponseSet, sha256_json
from .errors import ExemplarError, ParseFailureError, UnsupportedDatasetError
from .judge import JudgeRecord, JudgeRequest, compare
from .pipeline import enumerate_pairs, execute_cells
from .prompts import (
    CEFR_VERSION,
    FEW_SHOT_VERSION,
    JUDGE_PLAIN_VERSION,
    REPROMPT_LEVEL,
    REPROMPT_NUMBER,
    SCORE_VERSION,
    Prompt,
    cefr_prompt,
    few_shot_prompt,
    score_prompt,
)

METHODS = ("pairwise", "scoring", "few-shot", "cefr-level")

# Only the B2 wording is fixed; supply full definitions through ``definitions=``.
CEFR_B2 = (
    "Can write clear, detailed texts on different subjects. "
    "Can use information and arguments from other sources in their writing."
)
DEFAULT_CEFR_DEFINITIONS = {
    "A2": "CEFR A2 writing level.",
    "B1": "CEFR B1 writing level.",
    "B2": CEFR_B2,
    "C1": "CEFR C1 writing level.",
}


@dataclass
class BaselineResult:
    method: str
    ids: tuple[str, ...]
    scores: np.ndarray
    raw: dict[str, str] = field(default_factory=dict)
    fresh_calls: int = 0
    records: list[JudgeRecord] = field(default_factory=list)
    levels: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline {self.method!r}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.ids),):
            raise ValueError("one score per response is required")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.scores.tolist()))

    def to_json(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "scores": self.as_dict(),
            "ranking": ahp.rank_by_score(self.scores.tolist(), list(self.ids)),
            "raw": self.raw,
            "backend_calls": self.fresh_calls,
        }


# --- numeric extraction -------------------------------------------------------------

def parse_score(raw: str, lo: int = 0, hi: int = 100) -> int:
    """First integer in ``raw`` that lies in ``[lo, hi]``; decimals are skipped."""
    for m in re.finditer(r"(?<![\d.])-?\d+(?:\.\d+)?", raw):
        tok = m.group(0)
        if "." in tok:
            continue
        v = int(tok)
        if lo <= v <= hi:
            return v
    raise ParseFailureError(f"no integer in [{lo}, {hi}]", raw)


def parse_level(raw: str, n_levels: int) -> int:
    m = re.search(r"\blevel\s*[:#]?\s*(\d+)\b", raw, re.I)
    if m:
        v = int(m.group(1))
        if 1 <= v <= n_levels:
            return v
        raise ParseFailureError(f"level {v} outside 1..{n_levels}", raw)
    return parse_score(raw, 1, n_levels)


def parse_cefr(raw: str, bracket: Sequence[str]) -> int:
    """Ordinal position (1-based) of the CEFR label named in ``raw`` within ``bracket``."""
    m = re.search(r"\b([ABC][12])\b", raw.upper())
    if not m:
        raise ParseFailureError("no CEFR label", raw)
    label = m.group(1)
    if label not in bracket:
        raise ParseFailureError(f"CEFR label {label} outside bracket {list(bracket)}", raw)
    return list(bracket).index(label) + 1


# --- helpers ---------------------------------------------------------------------------


def _ask(backend: Backend, prompt: Prompt, parse, reprompt: str) -> tuple[int, str]:
    raw = backend.complete(prompt).text
    try:
        return parse(raw), raw
    except ParseFailureError:
        raw = backend.complete(prompt.with_suffix(reprompt)).text
        return parse(raw), raw


def _per_response(
    method: str,
    dataset: ResponseSet,
    backend: Backend,
    version: str,
    build: callable,
    parse: callable,
    reprompt: str,
    *,
    cache: JudgmentCache | None,
    in_flight: int,
    levels: int | None = None,
    context: Any = None,
) -> BaselineResult:
    """Shared driver for methods that make one call per response.

    ``context`` (exemplars, level definitions) is folded into the cache key.
    """
    cache = cache if cache is not None else JudgmentCache()
    cells = list(range(dataset.n))
    salt = None if context is None else sha256_json(context)

    def key_of(i: int) -> str:
        return cache_key(backend.backend_id, backend.model_id, version, salt, dataset.question, (dataset.ids[i],))

    def call(i: int) -> dict[str, Any]:
        value, raw = _ask(backend, build(dataset.responses[i]), parse, reprompt)
        return {"id": dataset.ids[i], "value": value, "raw": raw}

    recs, fresh = execute_cells(cells, call, key_of, cache, kind=method, in_flight=in_flight)
    return BaselineResult(
        method,
        dataset.ids,
        np.array([r["value"] for r in recs], dtype=np.float64),
        {r["id"]: r["raw"] for r in recs},
        fresh,
        levels=levels,
    )


# --- methods ------------------------------------------------------------------------------


def pairwise_baseline(
    dataset: ResponseSet, backend: Backend, *, cache: JudgmentCache | None = None, in_flight: int = 4
) -> BaselineResult:
    """One criterion-free judgment per unordered pair, scored by the Perron vector."""
    cache = cache if cache is not None else JudgmentCache()
    pairs = enumerate_pairs(dataset.n)
    ids, texts = dataset.ids, dataset.texts

    def key_of(p: tuple[int, int]) -> str:
        return cache_key(backend.backend_id, backend.model_id, JUDGE_PLAIN_VERSION, None, dataset.question, (ids[p[0]], ids[p[1]]))

    def call(p: tuple[int, int]) -> dict[str, Any]:
        i, j = p
        return compare(backend, JudgeRequest(dataset.question, texts[i], texts[j], (ids[i], ids[j]))).to_json()

    raw, fresh = execute_cells(pairs, call, key_of, cache, kind="pairwise", in_flight=in_flight)
    records = [JudgeRecord.from_json(r) for r in raw]
    matrix = ahp.build_comparison_matrix(zip(pairs, (r.parsed for r in records)), dataset.n)
    scores = ahp.principal_eigenvector(matrix)
    raw_by_pair = {f"{r.pair[0]}|{r.pair[1]}": r.raw for r in records}
    return BaselineResult("pairwise", ids, scores, raw_by_pair, fresh, records)


def scoring_baseline(
    dataset: ResponseSet, backend: Backend, *, cache: JudgmentCache | None = None, in_flight: int = 4
) -> BaselineResult:
    def build(r):
        return score_prompt(dataset.question, r.text, {"id": r.id})

    return _per_response(
        "scoring", dataset, backend, SCORE_VERSION, build, parse_score, REPROMPT_NUMBER,
        cache=cache, in_flight=in_flight,
    )


def few_shot_exemplars(dataset: ResponseSet) -> list[tuple[int, str]]:
    """``(level, response id)`` exemplars, two per level, lowest level first."""
    gt = dataset.ground_truth
    if gt is None:
        raise ExemplarError("few-shot exemplars need ground truth")
    if gt.mode == LEVELS:
        distinct = sorted(set(gt.values.values()))
        out = []
        for ordinal, level in enumerate(distinct, 1):
            members = sorted((i for i, v in gt.values.items() if v == level), key=_natural_key)
            out.extend((ordinal, rid) for rid in members[:2])
        return out
    n = dataset.n
    if n < 8:
        raise ExemplarError(f"ranking-mode exemplars need at least 8 responses, got {n}")
    by_rank = {v: k for k, v in gt.values.items()}
    cut33 = max(4, math.floor(0.33 * n))
    cut66 = max(cut33 + 2, math.floor(0.66 * n))
    picks = [(1, (n - 1, n)), (2, (cut66 - 1, cut66)), (3, (cut33 - 1, cut33)), (4, (1, 2))]
    return [(level, by_rank[r]) for level, ranks in picks for r in ranks]


def few_shot_baseline(
    dataset: ResponseSet, backend: Backend, *, cache: JudgmentCache | None = None, in_flight: int = 4
) -> BaselineResult:
    shots = few_shot_exemplars(dataset)
    text_of = dict(zip(dataset.ids, dataset.texts))
    exemplars = [(lvl, text_of[rid]) for lvl, rid in shots]
    n_levels = max(lvl for lvl, _ in shots)

    def build(r):
        return few_shot_prompt(dataset.question, r.text, exemplars, n_levels, {"id": r.id})

    return _per_response(
        "few-shot", dataset, backend, FEW_SHOT_VERSION, build, lambda raw: parse_level(raw, n_levels),
        REPROMPT_LEVEL, cache=cache, in_flight=in_flight, levels=n_levels, context=shots,
    )


def cefr_baseline(
    dataset: ResponseSet,
    backend: Backend,
    *,
    definitions: Mapping[str, str] | None = None,
    cache: JudgmentCache | None = None,
    in_flight: int = 4,
) -> BaselineResult:
    """CEFR level per essay; ``definitions`` maps bracket labels (lowest first) to descriptions."""
    if not dataset.is_essay or (dataset.ground_truth is not None and dataset.ground_truth.mode == RANKING):
        raise UnsupportedDatasetError("the CEFR baseline only applies to essay datasets graded by level")
    definitions = dict(definitions or DEFAULT_CEFR_DEFINITIONS)
    bracket = tuple(definitions) or DEFAULT_CEFR_BRACKET

    def build(r):
        return cefr_prompt(dataset.question, r.text, definitions, {"id": r.id})

    result = _per_response(
        "cefr-level", dataset, backend, CEFR_VERSION, build, lambda raw: parse_cefr(raw, bracket),
        REPROMPT_LEVEL, cache=cache, in_flight=in_flight, levels=len(bracket), context=definitions,
    )
    return result


def run_baseline(method: str, dataset: ResponseSet, backend: Backend, **kwargs) -> BaselineResult:
    fn = {
        "pairwise": pairwise_baseline,
        "scoring": scoring_baseline,
        "few-shot": few_shot_baseline,
        "cefr-level": cefr_baseline,
    }.get(method)
    if fn is None:
        raise ValueError(f"unknown baseline {method!r}; choose from {', '.join(METHODS)}")
    if method != "cefr-level":
        kwargs.pop("definitions", None)
    return fn(dataset, backend, **kwargs)
