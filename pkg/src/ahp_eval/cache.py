"""Append-only JSON Lines store of backend answers, keyed by content digest."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import Any

from .errors import AHPEvalError

logger = logging.getLogger(__name__)


class CacheCorruptError(AHPEvalError):
    pass


def cache_key(
    backend_id: str,
    model_id: str,
    template_version: str,
    criterion: str | None,
    question: str,
    ids: Sequence[str],
) -> str:
    """Digest identifying one backend query; the id order matters."""
    question_digest = hashlib.sha256(question.encode("utf-8")).hexdigest()
    ident = [backend_id, model_id, template_version, criterion, question_digest, list(ids)]
    blob = json.dumps(ident, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class JudgmentCache:
    """Thread-safe cache; with ``path=None`` it lives in memory only.

    Each line is ``{"key": ..., "kind": ..., "record": {...}}``. A truncated
    final line (interrupted write) is dropped on load and trimmed from the file
    so that later appends start on a fresh line.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()
        self.appended = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        lines = data.split(b"\n")
        good_bytes = 0
        for lineno, line in enumerate(lines, 1):
            is_last = lineno == len(lines)
            if not line.strip():
                good_bytes += len(line) + (0 if is_last else 1)
                continue
            try:
                entry = json.loads(line)
                key = entry["key"]
            except (ValueError, KeyError, TypeError) as exc:
                tail = all(not rest.strip() for rest in lines[lineno:])
                if tail:
                    logger.warning("dropping partial trailing cache line %d in %s", lineno, self.path)
                    with self.path.open("r+b") as fh:
                        fh.truncate(good_bytes)
                    return
                raise CacheCorruptError(f"{self.path}:{lineno}: unreadable cache record") from exc
            if is_last:
                # complete JSON but no newline: finish the line so appends stay aligned
                with self.path.open("ab") as fh:
                    fh.write(b"\n")
            self._entries[key] = entry
            good_bytes += len(line) + 1

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[dict[str, Any]]:
        return iter(list(self._entries.values()))

    def get(self, key: str) -> dict[str, Any] | None:
        entry = self._entries.get(key)
        return None if entry is None else entry["record"]

    def put(self, key: str, record: dict[str, Any], kind: str = "judge") -> None:
        entry = {"key": key, "kind": kind, "record": record}
        line = json.dumps(entry, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        with self._lock:
            if key in self._entries:
                return
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
            self._entries[key] = entry
            self.appended += 1
