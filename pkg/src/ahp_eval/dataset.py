"""On-disk dataset schema, ground truth, and report export.

A dataset is one JSON document::

    {
      "question": "...",
      "responses": [{"id": "r01", "text": "..."}, ...],
      "ground_truth": {"mode": "levels" | "ranking", "values": {"r01": 3, ...}},
      "essay": true                      # optional, defaults to mode == "levels"
    }

For ``levels`` a larger value is better. For ``ranking`` the values are rank
positions and 1 is best.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DatasetError

LEVELS = "levels"
RANKING = "ranking"


@dataclass(frozen=True)
class Response:
    id: str
    text: str


@dataclass(frozen=True)
class GroundTruth:
    mode: str
    values: Mapping[str, int]

    @classmethod
    def levels(cls, values: Mapping[str, int]) -> GroundTruth:
        return cls(LEVELS, dict(values))

    @classmethod
    def ranking(cls, values: Mapping[str, int]) -> GroundTruth:
        return cls(RANKING, dict(values))

    def __post_init__(self) -> None:
        if self.mode not in (LEVELS, RANKING):
            raise DatasetError(f"unknown ground-truth mode {self.mode!r}", "ground_truth.mode")
        for rid, v in self.values.items():
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise DatasetError(f"value must be an integer, got {v!r}", f"ground_truth.values.{rid}")
        if self.mode == RANKING:
            ranks = sorted(self.values.values())
            if ranks != list(range(1, len(ranks) + 1)):
                seen: set[int] = set()
                for rid, v in self.values.items():
                    if v in seen or not 1 <= v <= len(ranks):
                        raise DatasetError(
                            f"ranks must be a permutation of 1..{len(ranks)} (rank {v} invalid or repeated)",
                            f"ground_truth.values.{rid}",
                        )
                    seen.add(v)

    def oriented(self, ids: Sequence[str]) -> np.ndarray:
        """Values aligned to ``ids`` such that larger always means better."""
        raw = np.array([self.values[i] for i in ids], dtype=np.float64)
        return raw if self.mode == LEVELS else (len(self.values) + 1) - raw

    @property
    def default_gap(self) -> int:
        return 2 if self.mode == LEVELS else 20

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "values": {k: int(v) for k, v in self.values.items()}}


@dataclass(frozen=True)
class ResponseSet:
    question: str
    responses: tuple[Response, ...]
    ground_truth: GroundTruth | None = None
    essay: bool | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "responses", tuple(self.responses))
        if not self.question.strip():
            raise DatasetError("question must be non-empty", "question")
        if len(self.responses) < 2:
            raise DatasetError(f"need at least 2 responses, got {len(self.responses)}", "responses")
        seen: set[str] = set()
        for idx, r in enumerate(self.responses):
            if not isinstance(r.id, str) or not r.id.strip():
                raise DatasetError("id must be a non-empty string", f"responses[{idx}].id")
            if r.id in seen:
                raise DatasetError(f"duplicate id {r.id!r}", f"responses[{idx}].id")
            if not isinstance(r.text, str) or not r.text.strip():
                raise DatasetError(f"missing text for {r.id!r}", f"responses[{idx}].text")
            seen.add(r.id)
        if self.ground_truth is not None:
            gt_ids = set(self.ground_truth.values)
            for rid in (r.id for r in self.responses):
                if rid not in gt_ids:
                    raise DatasetError(f"ground truth has no value for {rid!r}", "ground_truth.values")
            for rid in sorted(gt_ids - seen):
                raise DatasetError(f"ground truth names unknown id {rid!r}", f"ground_truth.values.{rid}")

    @property
    def n(self) -> int:
        return len(self.responses)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.responses)

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(r.text for r in self.responses)

    @property
    def is_essay(self) -> bool:
        if self.essay is not None:
            return self.essay
        return self.ground_truth is not None and self.ground_truth.mode == LEVELS

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "question": self.question,
            "responses": [{"id": r.id, "text": r.text} for r in self.responses],
        }
        if self.ground_truth is not None:
            doc["ground_truth"] = self.ground_truth.to_json()
        if self.essay is not None:
            doc["essay"] = self.essay
        return doc

    def digest(self) -> str:
        return sha256_json(self.to_json())


def sha256_json(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def parse_dataset(doc: Any) -> ResponseSet:
    if not isinstance(doc, dict):
        raise DatasetError("top level must be an object")
    question = doc.get("question")
    if not isinstance(question, str):
        raise DatasetError("missing or non-string question", "question")
    raw = doc.get("responses")
    if not isinstance(raw, list):
        raise DatasetError("responses must be a list", "responses")
    responses = []
    for idx, item in enumerate(raw):
        if not isinstance(item, dict):
            raise DatasetError("response must be an object", f"responses[{idx}]")
        if "text" not in item:
            raise DatasetError("missing text", f"responses[{idx}].text")
        rid, text = item.get("id"), item["text"]
        if not isinstance(text, str):
            raise DatasetError("text must be a string", f"responses[{idx}].text")
        responses.append(Response(rid if isinstance(rid, str) else "", text.strip()))
    gt = None
    if doc.get("ground_truth") is not None:
        g = doc["ground_truth"]
        if not isinstance(g, dict) or not isinstance(g.get("values"), dict):
            raise DatasetError("ground_truth needs mode and values", "ground_truth")
        gt = GroundTruth(g.get("mode"), dict(g["values"]))
    essay = doc.get("essay")
    if essay is not None and not isinstance(essay, bool):
        raise DatasetError("essay must be a boolean", "essay")
    return ResponseSet(question.strip(), tuple(responses), gt, essay)


def load_dataset(path: str | Path) -> ResponseSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc
    except OSError as exc:
        raise DatasetError(str(exc), str(path)) from exc
    try:
        return parse_dataset(doc)
    except DatasetError as exc:
        raise DatasetError(str(exc), str(path)) from exc


def save_dataset(dataset: ResponseSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataset.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


# --- reports -----------------------------------------------------------------


def histogram(scores: Sequence[float], *, bins: int = 10, levels: int | None = None) -> list[tuple[float, float, int]]:
    """Equal-width ``(low, high, count)`` bins over the observed range.

    With ``levels`` set the bins are one unit wide and centred on 1..levels.
    A constant score vector collapses to a single bin.
    """
    x = np.asarray(scores, dtype=np.float64)
    if levels is not None:
        edges = np.arange(levels + 1) + 0.5
        counts, _ = np.histogram(x, bins=edges)
        return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]
    lo, hi = float(x.min()), float(x.max())
    if math.isclose(lo, hi, rel_tol=0, abs_tol=1e-15):
        return [(lo, hi, int(x.size))]
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def export_report(
    report: Mapping[str, Any],
    out_dir: str | Path,
    *,
    stem: str = "report",
    levels: int | None = None,
    bins: int = 10,
    timestamp: str | None = None,
) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>_histogram.csv``; returns both paths.

    ``report`` must carry a ``scores`` mapping. Everything except the
    ``created_at`` field is a deterministic function of ``report``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        doc = dict(report)
        if "config" in doc:
            doc["config_digest"] = sha256_json(doc["config"])
        doc["created_at"] = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
        json_path = out / f"{stem}.json"
        json_path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        csv_path = out / f"{stem}_histogram.csv"
        rows = histogram(list(doc["scores"].values()), bins=bins, levels=levels)
        _write_csv(csv_path, ("bin_low", "bin_high", "count"), rows)
    except OSError as exc:
        raise DatasetError(f"cannot write report: {exc}", str(out)) from exc
    return json_path, csv_path


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, header, rows)
    return path
