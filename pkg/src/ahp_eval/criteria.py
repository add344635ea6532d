"""Criteria generation: mine reasons from ordered answer pairs, then rank the top k."""

from __future__ import annotations

import concurrent.futures as cf
import itertools
import json
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .backends import Backend
from .dataset import Response, ResponseSet, sha256_json
from .errors import ConfigError, InsufficientCriteriaError, ParseFailureError, SampleTooLargeError
from .prompts import REPROMPT_LIST, reasons_prompt, summarize_prompt

GENERATED = "generated"
USER_SUPPLIED = "user-supplied"

DEFAULT_M = 10
DEFAULT_K = 10
CHUNK_REASONS = 100
CONTEXT_BUDGET_CHARS = 60_000
MAX_REASONS = 5
MIN_REASON_WORDS = 3


def _fold(label: str) -> str:
    return " ".join(label.split()).casefold()


@dataclass(frozen=True)
class CriterionSet:
    """Ranked criteria labels, most important first."""

    criteria: tuple[str, ...]
    provenance: str = USER_SUPPLIED
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        labels = tuple(" ".join(str(c).split()) for c in self.criteria)
        object.__setattr__(self, "criteria", labels)
        if not labels:
            raise ConfigError("a criterion set needs at least one label")
        if any(not c for c in labels):
            raise ConfigError("criterion labels must be non-empty")
        folded = [_fold(c) for c in labels]
        if len(set(folded)) != len(folded):
            dup = next(c for c in labels if folded.count(_fold(c)) > 1)
            raise ConfigError(f"duplicate criterion {dup!r}")
        if self.provenance not in (GENERATED, USER_SUPPLIED):
            raise ConfigError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.criteria)

    def digest(self) -> str:
        return sha256_json(list(self.criteria))

    def to_json(self) -> dict[str, Any]:
        return {"criteria": list(self.criteria), "provenance": self.provenance, "metadata": dict(self.metadata)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_criteria(path: str | Path) -> CriterionSet:
    """Read a criteria file; a bare JSON list of labels counts as user-supplied."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, list):
        return CriterionSet(tuple(doc))
    if not isinstance(doc, dict) or not isinstance(doc.get("criteria"), list):
        raise ConfigError(f"{path}: expected a list of labels or an object with 'criteria'")
    return CriterionSet(tuple(doc["criteria"]), doc.get("provenance", USER_SUPPLIED), doc.get("metadata", {}))


@dataclass(frozen=True)
class ReasonBatch:
    pair: tuple[str, str]
    reasons: tuple[str, ...]
    raw: str


# --- sampling ----------------------------------------------------------------


def sample_seed_responses(dataset: ResponseSet, m: int, seed: int) -> list[str]:
    if m > dataset.n:
        raise SampleTooLargeError(f"cannot sample {m} of {dataset.n} responses")
    if m < 2:
        raise SampleTooLargeError(f"need m >= 2, got {m}")
    picked = np.random.default_rng(seed).choice(dataset.n, size=m, replace=False)
    return [dataset.ids[int(i)] for i in picked]


def ordered_pairs(ids: Sequence[str]) -> list[tuple[str, str]]:
    return list(itertools.permutations(ids, 2))


# --- parsing -----------------------------------------------------------------

_MARKER = re.compile(r"^\s*(?:\(?\d+[.)]|[-*•]|\(\d+\))\s+")


def _list_items(raw: str) -> list[str]:
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    marked = [ln for ln in lines if _MARKER.match(ln)]
    items = marked if marked else lines
    return [_MARKER.sub("", ln).strip() for ln in items]


def parse_reasons(raw: str) -> list[str]:
    reasons = [r for r in _list_items(raw) if len(r.split()) >= MIN_REASON_WORDS]
    if not reasons:
        raise ParseFailureError("no reasons found", raw)
    return reasons[:MAX_REASONS]


def _clean_label(item: str) -> str:
    item = item.replace("**", "").strip().strip("\"'")
    item = re.split(r":\s| [–—-] ", item, maxsplit=1)[0]
    return item.strip().rstrip(".").strip().strip("\"'").strip()


def parse_criteria(raw: str) -> list[str]:
    """Distinct criterion labels in the order given (case/whitespace-insensitive dedup)."""
    seen: set[str] = set()
    out = []
    for item in _list_items(raw):
        label = _clean_label(item)
        if label and _fold(label) not in seen:
            seen.add(_fold(label))
            out.append(label)
    return out


# --- backend phases ------------------------------------------------------------


def elicit_reasons(
    backend: Backend, question: str, first: Response, second: Response, *, max_reprompts: int = 2
) -> ReasonBatch:
    prompt = reasons_prompt(question, first.text, second.text, {"id_first": first.id, "id_second": second.id})
    raw = ""
    for round_ in range(max_reprompts + 1):
        raw = backend.complete(prompt if round_ == 0 else prompt.with_suffix(REPROMPT_LIST)).text
        try:
            return ReasonBatch((first.id, second.id), tuple(parse_reasons(raw)), raw)
        except ParseFailureError:
            continue
    raise ParseFailureError(f"no reasons for pair {(first.id, second.id)}", raw)


def _summarize_once(backend: Backend, question: str, reasons: Sequence[str], k: int, max_reprompts: int) -> tuple[list[str], str]:
    prompt = summarize_prompt(question, reasons, k)
    best: list[str] = []
    raw = ""
    for round_ in range(max_reprompts + 1):
        raw = backend.complete(prompt if round_ == 0 else prompt.with_suffix(REPROMPT_LIST)).text
        labels = parse_criteria(raw)
        if len(labels) > len(best):
            best = labels
        if len(best) >= k:
            break
    return best, raw


def summarize_criteria(
    backend: Backend,
    reasons: Sequence[str],
    k: int,
    *,
    question: str = "",
    max_reprompts: int = 2,
    context_budget_chars: int = CONTEXT_BUDGET_CHARS,
    chunk_size: int = CHUNK_REASONS,
) -> CriterionSet:
    """Ask the backend to merge and rank ``reasons`` into ``k`` criteria.

    When the pool is larger than ``context_budget_chars`` it is summarised in
    chunks of ``chunk_size`` reasons and the partial lists are summarised again.
    """
    if not reasons:
        raise ConfigError("cannot summarise an empty reason pool")
    if k < 1:
        raise ConfigError("k must be at least 1")
    chunked = sum(len(r) + 3 for r in reasons) > context_budget_chars
    pool = list(reasons)
    if chunked:
        partial: list[str] = []
        for start in range(0, len(pool), chunk_size):
            labels, _ = _summarize_once(backend, question, pool[start : start + chunk_size], k, max_reprompts)
            partial.extend(labels)
        pool = partial
    labels, raw = _summarize_once(backend, question, pool, k, max_reprompts)
    if len(labels) < k:
        raise InsufficientCriteriaError(k, len(labels))
    return CriterionSet(
        tuple(labels[:k]),
        GENERATED,
        {"k": k, "reason_count": len(reasons), "chunked": chunked, "raw_summary": raw},
    )


def generate_criteria(
    dataset: ResponseSet,
    backend: Backend,
    *,
    m: int = DEFAULT_M,
    k: int = DEFAULT_K,
    seed: int = 0,
    in_flight: int = 4,
) -> tuple[CriterionSet, list[ReasonBatch]]:
    """Full generation phase; reason elicitation runs concurrently, results stay in pair order."""
    ids = sample_seed_responses(dataset, m, seed)
    by_id = {r.id: r for r in dataset.responses}
    pairs = ordered_pairs(ids)
    with cf.ThreadPoolExecutor(max_workers=max(1, in_flight)) as pool:
        batches = list(
            pool.map(lambda p: elicit_reasons(backend, dataset.question, by_id[p[0]], by_id[p[1]]), pairs)
        )
    reasons = [r for b in batches for r in b.reasons]
    crit = summarize_criteria(backend, reasons, k, question=dataset.question)
    meta = {
        **crit.metadata,
        "m": m,
        "seed": seed,
        "sampled_ids": ids,
        "pairs": len(pairs),
        "backend_id": backend.backend_id,
        "model_id": backend.model_id,
    }
    return CriterionSet(crit.criteria, GENERATED, meta), batches
