"""Evaluation phase: schedule every (criterion, pair) judgment, then score.

One judge call is made per unordered pair and criterion, with the lower
index shown first; the mirrored matrix entry is the reciprocal. Answers
already in the cache are never requested again, which is also how an
interrupted run resumes.
"""

from __future__ import annotations

import concurrent.futures as cf
import json
import logging
import sys
import threading
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from . import ahp
from .backends import Backend
from .cache import JudgmentCache, cache_key
from .criteria import CriterionSet, load_criteria
from .dataset import ResponseSet, load_dataset, sha256_json
from .errors import ConfigMismatchError, IncompleteTensorError, TooFewResponsesError, UnknownRunError
from .judge import JudgeRecord, JudgeRequest, compare
from .prompts import JUDGE_VERSION

logger = logging.getLogger(__name__)


def enumerate_pairs(n: int) -> list[tuple[int, int]]:
    """All unordered pairs, lexicographic, lower index first."""
    if n < 2:
        raise TooFewResponsesError(f"need at least 2 responses, got {n}")
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def request_count(method: str, n: int, k: int = 1) -> int:
    """Backend requests a fresh run of ``method`` costs for ``n`` answers, ``k`` criteria."""
    if method == "ahp":
        return k * n * (n - 1) // 2
    if method == "pairwise":
        return n * (n - 1) // 2
    if method in ("scoring", "few-shot", "cefr-level"):
        return n
    raise ValueError(f"unknown method {method!r}")


@dataclass
class EvaluationConfig:
    in_flight: int = 4
    requests_per_minute: float | None = None
    literal_scale: bool = False
    progress: bool = True

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class EvaluationRun:
    run_id: str
    dataset_digest: str
    criteria_digest: str
    backend_id: str
    model_id: str
    prompt_version: str
    config: dict[str, Any]
    status: list[str]
    dataset_path: str | None = None
    criteria_path: str | None = None
    started_at: str = ""
    finished_at: str | None = None
    fresh_calls: int = 0

    @property
    def total_cells(self) -> int:
        return sum(len(s) for s in self.status)

    @property
    def completed_cells(self) -> int:
        return sum(s.count("1") for s in self.status)

    @property
    def complete(self) -> bool:
        return self.completed_cells == self.total_cells

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> EvaluationRun:
        return cls(**doc)

    def save(self, state_dir: str | Path) -> Path:
        path = Path(state_dir) / f"{self.run_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path


@dataclass
class EvaluationResult:
    tensor: ahp.ComparisonTensor
    scores: ahp.FinalScores
    run: EvaluationRun
    records: list[JudgeRecord] = field(default_factory=list)

    def __iter__(self):
        return iter((self.tensor, self.scores, self.run))


# --- scheduling ----------------------------------------------------------------


class _RateLimiter:
    def __init__(self, per_minute: float | None) -> None:
        self.interval = 60.0 / per_minute if per_minute else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next)
            self._next = slot + self.interval
        if slot > now:
            time.sleep(slot - now)


def execute_cells(
    cells: Sequence[Any],
    call: Callable[[Any], dict[str, Any]],
    key_of: Callable[[Any], str],
    cache: JudgmentCache,
    *,
    kind: str,
    in_flight: int = 4,
    requests_per_minute: float | None = None,
    on_done: Callable[[int, Any], None] | None = None,
) -> tuple[list[dict[str, Any]], int]:
    """Resolve each cell from ``cache`` or by ``call``; returns records in cell order and fresh-call count.

    Fresh results are appended to the cache by this thread only, as they
    arrive. On the first failure no further cells are started; answers that
    were already in flight are still cached, then the error propagates.
    """
    results: list[dict[str, Any] | None] = [None] * len(cells)
    pending = []
    for idx, cell in enumerate(cells):
        hit = cache.get(key_of(cell))
        if hit is None:
            pending.append(idx)
        else:
            results[idx] = hit
    fresh = 0
    done = len(cells) - len(pending)
    limiter = _RateLimiter(requests_per_minute)

    def task(idx: int) -> dict[str, Any]:
        limiter.wait()
        return call(cells[idx])

    if pending:
        pool = cf.ThreadPoolExecutor(max_workers=max(1, in_flight))
        failure: BaseException | None = None
        try:
            it = iter(pending)
            running: dict[cf.Future, int] = {}
            for idx in it:
                running[pool.submit(task, idx)] = idx
                if len(running) >= in_flight:
                    break
            while running:
                finished, _ = cf.wait(running, return_when=cf.FIRST_COMPLETED)
                for fut in finished:
                    idx = running.pop(fut)
                    try:
                        rec = fut.result()
                    except BaseException as exc:  # noqa: BLE001 - re-raised below
                        failure = failure or exc
                        continue
                    cache.put(key_of(cells[idx]), rec, kind=kind)
                    results[idx] = rec
                    fresh += 1
                    done += 1
                    if on_done:
                        on_done(done, cells[idx])
                while failure is None and len(running) < in_flight:
                    nxt = next(it, None)
                    if nxt is None:
                        break
                    running[pool.submit(task, nxt)] = nxt
        finally:
            pool.shutdown(wait=True, cancel_futures=True)
        if failure is not None:
            raise failure
    return [r for r in results if r is not None], fresh


def _stderr_progress(k: int, n_pairs: int, stream: TextIO) -> Callable[[int, Any], None]:
    step = max(1, n_pairs // 10)
    lock = threading.Lock()

    def report(done: int, cell: tuple[int, int]) -> None:
        c, p = cell[0] + 1, cell[1] + 1
        if p % step == 0 or p == n_pairs:
            with lock:
                print(f"criterion {c}/{k}, pair {p}/{n_pairs}", file=stream, flush=True)

    return report


# --- evaluation ------------------------------------------------------------------


def _labels(criteria: CriterionSet | Sequence[str]) -> CriterionSet:
    return criteria if isinstance(criteria, CriterionSet) else CriterionSet(tuple(criteria))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def make_run_id(dataset_digest: str, criteria_digest: str, backend_id: str, model_id: str, literal: bool) -> str:
    return sha256_json([dataset_digest, criteria_digest, backend_id, model_id, JUDGE_VERSION, literal])[:16]


def judgment_key(backend_id: str, model_id: str, dataset: ResponseSet, criterion: str, pair: tuple[int, int]) -> str:
    ids = dataset.ids
    return cache_key(backend_id, model_id, JUDGE_VERSION, criterion, dataset.question, (ids[pair[0]], ids[pair[1]]))


def assemble_tensor(
    dataset: ResponseSet, labels: Sequence[str], records: Sequence[JudgeRecord], *, literal: bool = False
) -> ahp.ComparisonTensor:
    """Build the k x n x n tensor from records given in criteria-major, pair order."""
    pairs = enumerate_pairs(dataset.n)
    if len(records) != len(labels) * len(pairs):
        raise IncompleteTensorError(len(labels) * len(pairs) - len(records), len(labels) * len(pairs))
    mats = []
    for c in range(len(labels)):
        chunk = records[c * len(pairs) : (c + 1) * len(pairs)]
        mats.append(ahp.build_comparison_matrix(zip(pairs, (r.parsed for r in chunk)), dataset.n, literal=literal))
    return ahp.ComparisonTensor.from_matrices(mats)


def run_evaluation(
    dataset: ResponseSet,
    criteria: CriterionSet | Sequence[str],
    backend: Backend,
    config: EvaluationConfig | None = None,
    *,
    cache: JudgmentCache | None = None,
    state_dir: str | Path | None = None,
    dataset_path: str | Path | None = None,
    criteria_path: str | Path | None = None,
    progress_stream: TextIO | None = None,
) -> EvaluationResult:
    config = config or EvaluationConfig()
    cache = cache if cache is not None else JudgmentCache()
    crit = _labels(criteria)
    labels = crit.criteria
    pairs = enumerate_pairs(dataset.n)
    cells = [(c, p) for c in range(len(labels)) for p in range(len(pairs))]
    ids = dataset.ids
    texts = dataset.texts

    run = EvaluationRun(
        run_id=make_run_id(dataset.digest(), crit.digest(), backend.backend_id, backend.model_id, config.literal_scale),
        dataset_digest=dataset.digest(),
        criteria_digest=crit.digest(),
        backend_id=backend.backend_id,
        model_id=backend.model_id,
        prompt_version=JUDGE_VERSION,
        config=config.to_json(),
        status=["0" * len(pairs) for _ in labels],
        dataset_path=str(dataset_path) if dataset_path else None,
        criteria_path=str(criteria_path) if criteria_path else None,
        started_at=_now(),
    )

    def key_of(cell: tuple[int, int]) -> str:
        return judgment_key(backend.backend_id, backend.model_id, dataset, labels[cell[0]], pairs[cell[1]])

    def call(cell: tuple[int, int]) -> dict[str, Any]:
        c, p = cell
        i, j = pairs[p]
        req = JudgeRequest(dataset.question, texts[i], texts[j], (ids[i], ids[j]), labels[c], criterion_index=c)
        return compare(backend, req).to_json()

    # persisted before any call so that even a hard kill leaves a resumable run
    _mark_status(run, cells, key_of, cache)
    if state_dir is not None:
        run.save(state_dir)

    on_done = None
    if config.progress:
        on_done = _stderr_progress(len(labels), len(pairs), progress_stream or sys.stderr)
    try:
        raw, fresh = execute_cells(
            cells, call, key_of, cache, kind="judge", in_flight=config.in_flight,
            requests_per_minute=config.requests_per_minute, on_done=on_done,
        )
    except BaseException:
        _mark_status(run, cells, key_of, cache)
        run.fresh_calls = cache.appended
        if state_dir is not None:
            run.save(state_dir)
        raise
    run.fresh_calls = fresh
    run.status = ["1" * len(pairs) for _ in labels]
    run.finished_at = _now()
    records = [JudgeRecord.from_json(r) for r in raw]
    tensor = assemble_tensor(dataset, labels, records, literal=config.literal_scale)
    scores = ahp.score_tensor(tensor, ids)
    if state_dir is not None:
        run.save(state_dir)
    return EvaluationResult(tensor, scores, run, records)


def _mark_status(run: EvaluationRun, cells, key_of, cache: JudgmentCache) -> None:
    rows = [list(s) for s in run.status]
    for cell in cells:
        if key_of(cell) in cache:
            rows[cell[0]][cell[1]] = "1"
    run.status = ["".join(r) for r in rows]


def load_run(run_id: str, state_dir: str | Path) -> EvaluationRun:
    path = Path(state_dir) / f"{run_id}.json"
    if not path.exists():
        raise UnknownRunError(f"no persisted run {run_id!r} in {state_dir}")
    return EvaluationRun.from_json(json.loads(path.read_text(encoding="utf-8")))


def resume(
    run_id: str,
    state_dir: str | Path,
    backend: Backend,
    *,
    cache: JudgmentCache,
    dataset: ResponseSet | None = None,
    criteria: CriterionSet | Sequence[str] | None = None,
    config: EvaluationConfig | None = None,
    progress_stream: TextIO | None = None,
) -> EvaluationResult:
    """Finish a persisted run; refuses if its inputs or backend have changed since."""
    prior = load_run(run_id, state_dir)
    if dataset is None:
        if not prior.dataset_path:
            raise UnknownRunError(f"run {run_id} recorded no dataset path; pass the dataset explicitly")
        dataset = load_dataset(prior.dataset_path)
    if criteria is None:
        if not prior.criteria_path:
            raise UnknownRunError(f"run {run_id} recorded no criteria path; pass the criteria explicitly")
        criteria = load_criteria(prior.criteria_path)
    crit = _labels(criteria)
    current = {
        "dataset": dataset.digest(),
        "criteria": crit.digest(),
        "backend": backend.backend_id,
        "model": backend.model_id,
    }
    recorded = {
        "dataset": prior.dataset_digest,
        "criteria": prior.criteria_digest,
        "backend": prior.backend_id,
        "model": prior.model_id,
    }
    diffs = {k: (recorded[k][:16], current[k][:16]) for k in current if current[k] != recorded[k]}
    if diffs:
        raise ConfigMismatchError(diffs)
    if config is None:
        config = EvaluationConfig(**prior.config)
    return run_evaluation(
        dataset, crit, backend, config, cache=cache, state_dir=state_dir,
        dataset_path=prior.dataset_path, criteria_path=prior.criteria_path, progress_stream=progress_stream,
    )


def load_cached_tensor(
    dataset: ResponseSet,
    criteria: CriterionSet | Sequence[str],
    backend_id: str,
    model_id: str,
    cache: JudgmentCache,
    *,
    literal: bool = False,
) -> tuple[ahp.ComparisonTensor, list[JudgeRecord]]:
    """Rebuild a finished run's tensor purely from the cache (no backend access)."""
    labels = _labels(criteria).criteria
    pairs = enumerate_pairs(dataset.n)
    records = []
    missing = 0
    for label in labels:
        for pair in pairs:
            hit = cache.get(judgment_key(backend_id, model_id, dataset, label, pair))
            if hit is None:
                missing += 1
            else:
                records.append(JudgeRecord.from_json(hit))
    if missing:
        raise IncompleteTensorError(missing, len(labels) * len(pairs))
    return assemble_tensor(dataset, labels, records, literal=literal), records


def tensor_to_json(tensor: ahp.ComparisonTensor) -> list:
    return np.asarray(tensor.slices).tolist()
