"""Judge backends: an HTTP chat-completion client, a scripted oracle, and fixture replay.

Every backend answers a :class:`~ahp_eval.prompts.Prompt` with raw text. The
callers (judge, criteria generation, baselines) parse that text, so the
oracle and fixture backends go through exactly the same parsing as a model.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
import zlib
from collections import Counter
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, runtime_checkable

import httpx
import numpy as np

from .dataset import sha256_json
from .errors import BackendError, BackendUnavailableError, ConfigError, CredentialError, FixtureMissingError
from .prompts import Prompt

logger = logging.getLogger(__name__)

API_KEY_ENV = "AHP_JUDGE_API_KEY"
DEFAULT_CEFR_BRACKET = ("A2", "B1", "B2", "C1")


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int = 1
    tokens: int | None = None


@runtime_checkable
class Backend(Protocol):
    backend_id: str
    model_id: str

    def complete(self, prompt: Prompt) -> Completion: ...


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --- HTTP chat completion ----------------------------------------------------


@dataclass(frozen=True)
class LLMConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = API_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    jitter: float = 0.25
    temperature: float = 0.0
    max_tokens: int | None = None


_RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


def _backoff(config: LLMConfig, retry: int, rnd: random.Random) -> float:
    return config.backoff_base * config.backoff_factor**retry * (1 + config.jitter * rnd.random())


def llm_complete(
    prompt: str,
    config: LLMConfig,
    *,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rnd: random.Random | None = None,
) -> Completion:
    """One chat-completion request with retry on rate limits, 5xx and timeouts."""
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        raise CredentialError(f"environment variable {config.api_key_env} is not set")
    rnd = rnd or random.Random()
    own_client = client is None
    client = client or httpx.Client(timeout=config.timeout)
    url = config.base_url.rstrip("/") + "/chat/completions"
    body: dict[str, Any] = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }
    if config.max_tokens is not None:
        body["max_tokens"] = config.max_tokens
    headers = {"Authorization": f"Bearer {api_key}"}
    last_error = "no attempt made"
    try:
        for attempt in range(1, config.max_retries + 2):
            try:
                resp = client.post(url, json=body, headers=headers, timeout=config.timeout)
            except httpx.TimeoutException as exc:
                last_error = f"timeout: {exc}"
                resp = None
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                resp = None
            if resp is not None:
                if resp.status_code in (401, 403):
                    raise CredentialError(f"endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.is_success:
                    return _parse_completion(resp, attempt)
                if resp.status_code not in _RETRY_STATUS:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                last_error = f"HTTP {resp.status_code}"
            if attempt > config.max_retries:
                break
            delay = _backoff(config, attempt - 1, rnd)
            if resp is not None and (ra := resp.headers.get("retry-after")):
                try:
                    delay = max(delay, float(ra))
                except ValueError:
                    pass
            logger.warning("chat completion failed (%s); retry %d in %.2fs", last_error, attempt, delay)
            sleep(delay)
    finally:
        if own_client:
            client.close()
    raise BackendUnavailableError(f"giving up after {config.max_retries + 1} attempts: {last_error}")


def _parse_completion(resp: httpx.Response, attempt: int) -> Completion:
    try:
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed chat-completion body: {resp.text[:200]}") from exc
    tokens = (payload.get("usage") or {}).get("total_tokens")
    return Completion(text or "", attempts=attempt, tokens=tokens)


class LLMBackend:
    backend_id = "llm"

    def __init__(self, config: LLMConfig, *, client: httpx.Client | None = None, sleep=time.sleep) -> None:
        self.config = config
        self.model_id = config.model
        self._client = client
        self._sleep = sleep
        self._lock = threading.Lock()

    def _get_client(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(timeout=self.config.timeout)
            return self._client

    def complete(self, prompt: Prompt) -> Completion:
        return llm_complete(prompt.text, self.config, client=self._get_client(), sleep=self._sleep)


# --- scripted oracle -----------------------------------------------------------


@dataclass(frozen=True)
class OracleProfile:
    """Hidden per-criterion quality of every response, on a unit scale.

    ``noise`` adds a uniform perturbation in ``[-noise, noise]`` to each
    quality difference. The perturbation is a deterministic function of
    ``seed``, the criterion and the unordered pair, and flips sign when the
    pair is presented the other way around, so judgments stay antisymmetric.
    """

    qualities: Mapping[str, Sequence[float]]
    delta_big: float = 0.3
    delta_small: float = 0.05
    noise: float = 0.0
    seed: int = 0
    reasons: Sequence[str] = ()
    criteria: Sequence[str] = ()
    cefr_bracket: Sequence[str] = DEFAULT_CEFR_BRACKET

    def __post_init__(self) -> None:
        if not self.delta_big > self.delta_small >= 0:
            raise ConfigError("oracle needs delta_big > delta_small >= 0")
        if self.noise < 0:
            raise ConfigError("oracle noise amplitude must be non-negative")
        lengths = {len(q) for q in self.qualities.values()}
        if len(lengths) > 1:
            raise ConfigError(f"quality vectors have differing lengths {sorted(lengths)}")
        if self.criteria and lengths and len(self.criteria) != lengths.pop():
            raise ConfigError("one criterion label is required per quality dimension")

    @property
    def k(self) -> int:
        return len(next(iter(self.qualities.values()), ()))

    def to_json(self) -> dict[str, Any]:
        return {
            "qualities": {k: [float(x) for x in v] for k, v in self.qualities.items()},
            "delta_big": self.delta_big,
            "delta_small": self.delta_small,
            "noise": self.noise,
            "seed": self.seed,
            "reasons": list(self.reasons),
            "criteria": list(self.criteria),
            "cefr_bracket": list(self.cefr_bracket),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> OracleProfile:
        known = {"qualities", "delta_big", "delta_small", "noise", "seed", "reasons", "criteria", "cefr_bracket"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown oracle profile keys: {sorted(extra)}")
        if "qualities" not in doc:
            raise ConfigError("oracle profile needs 'qualities'")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()})

    @classmethod
    def load(cls, path: str | Path) -> OracleProfile:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _stable_int(token: str) -> int:
    return zlib.crc32(token.encode("utf-8"))


class OracleBackend:
    """Deterministic stand-in for an LLM; answers from hidden qualities."""

    backend_id = "oracle"

    def __init__(self, profile: OracleProfile) -> None:
        self.profile = profile
        self.model_id = "oracle-" + sha256_json(profile.to_json())[:12]

    # judgments

    def noise_term(self, criterion: int, id_a: str, id_b: str) -> float:
        p = self.profile
        if p.noise == 0:
            return 0.0
        lo, hi = sorted((id_a, id_b))
        rng = np.random.default_rng([p.seed, criterion + 1, _stable_int(lo), _stable_int(hi)])
        e = float(rng.uniform(-p.noise, p.noise))
        return e if id_a == lo else -e

    def quality(self, rid: str, criterion: int | None) -> float:
        q = self.profile.qualities[rid]
        return float(np.mean(q)) if criterion is None else float(q[criterion])

    def margin(self, criterion: int | None, id_a: str, id_b: str) -> float:
        d = self.quality(id_a, criterion) - self.quality(id_b, criterion)
        return d + self.noise_term(-1 if criterion is None else criterion, id_a, id_b)

    def judge_label(self, criterion: int | None, id_a: str, id_b: str) -> str:
        d = self.margin(criterion, id_a, id_b)
        p = self.profile
        if d > p.delta_big:
            return "A"
        if d > p.delta_small:
            return "B"
        if d >= -p.delta_small:
            return "C"
        if d >= -p.delta_big:
            return "D"
        return "E"

    def _criterion_index(self, fields: Mapping[str, Any]) -> int | None:
        crit = fields.get("criterion")
        if crit is None:
            return None
        if self.profile.criteria and crit in self.profile.criteria:
            return list(self.profile.criteria).index(crit)
        idx = fields.get("criterion_index")
        if idx is None:
            raise BackendError(f"oracle cannot map criterion {crit!r} to a quality dimension")
        return int(idx)

    # other tasks

    def _reasons(self, fields: Mapping[str, Any]) -> str:
        pool = list(self.profile.reasons) or ["The first answer is clearer and better organised"]
        h = _stable_int(f"{fields['id_first']}|{fields['id_second']}")
        count = min(len(pool), 2 + h % 2)
        picked = [pool[(h + i) % len(pool)] for i in range(count)]
        return "\n".join(f"{i}. {r}" for i, r in enumerate(picked, 1))

    @staticmethod
    def _summarize(fields: Mapping[str, Any]) -> str:
        counts = Counter(fields["reasons"])
        first_seen = {r: i for i, r in reversed(list(enumerate(fields["reasons"])))}
        ranked = sorted(counts, key=lambda r: (-counts[r], first_seen[r]))
        return "\n".join(f"{i}. {r}" for i, r in enumerate(ranked[: fields["k"]], 1))

    def _bucket(self, rid: str, n_levels: int) -> int:
        q = min(max(self.quality(rid, None), 0.0), 1.0)
        return min(n_levels, 1 + int(q * n_levels))

    def complete(self, prompt: Prompt) -> Completion:
        f = prompt.fields
        if prompt.task == "judge":
            text = self.judge_label(self._criterion_index(f), f["id_a"], f["id_b"])
        elif prompt.task == "reasons":
            text = self._reasons(f)
        elif prompt.task == "summarize":
            text = self._summarize(f)
        elif prompt.task == "score":
            q = min(max(self.quality(f["id"], None), 0.0), 1.0)
            text = str(int(round(100 * q)))
        elif prompt.task == "few-shot":
            text = f"Level {self._bucket(f['id'], int(f['n_levels']))}"
        elif prompt.task == "cefr":
            labels = list(f["labels"])
            text = labels[self._bucket(f["id"], len(labels)) - 1]
        else:
            raise BackendError(f"oracle has no answer for task {prompt.task!r}")
        return Completion(text)


# --- fixtures and wrappers -----------------------------------------------------


class FixtureBackend:
    """Replays recorded completions.

    The fixture file is JSON: ``{"model": ..., "responses": {prompt_sha256: text},
    "by_task": {task: text}}``. Exact prompt matches win over per-task defaults.
    """

    backend_id = "fixture"

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        by_task: Mapping[str, str] | None = None,
        model_id: str | None = None,
    ) -> None:
        self.responses = dict(responses or {})
        self.by_task = dict(by_task or {})
        self.model_id = model_id or "fixture-" + sha256_json([self.responses, self.by_task])[:12]

    @classmethod
    def load(cls, path: str | Path) -> FixtureBackend:
        path = Path(path)
        if path.is_dir():
            path = path / "fixtures.json"
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(doc.get("responses"), doc.get("by_task"), doc.get("model"))

    def save(self, path: str | Path) -> None:
        doc = {"model": self.model_id, "responses": self.responses, "by_task": self.by_task}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")

    def complete(self, prompt: Prompt) -> Completion:
        digest = prompt_digest(prompt.text)
        if digest in self.responses:
            return Completion(self.responses[digest])
        if prompt.task in self.by_task:
            return Completion(self.by_task[prompt.task])
        raise FixtureMissingError(f"no fixture for {prompt.task} prompt {digest[:12]}")


class RecordingBackend:
    """Pass-through that remembers every completion for later fixture replay."""

    def __init__(self, inner: Backend) -> None:
        self.inner = inner
        self.backend_id = inner.backend_id
        self.model_id = inner.model_id
        self.recorded: dict[str, str] = {}
        self._lock = threading.Lock()

    def complete(self, prompt: Prompt) -> Completion:
        out = self.inner.complete(prompt)
        with self._lock:
            self.recorded[prompt_digest(prompt.text)] = out.text
        return out

    def to_fixture(self) -> FixtureBackend:
        return FixtureBackend(self.recorded, model_id=self.model_id)


@dataclass
class CountingBackend:
    """Counts calls per task; optionally fails every call after ``fail_after``."""

    inner: Backend
    fail_after: int | None = None
    calls: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def total(self) -> int:
        return sum(self.calls.values())

    def complete(self, prompt: Prompt) -> Completion:
        with self._lock:
            if self.fail_after is not None and self.total >= self.fail_after:
                raise BackendUnavailableError("simulated outage")
            self.calls[prompt.task] += 1
        return self.inner.complete(prompt)


class ConstantBackend:
    """Answers every task with a fixed, parseable reply; used for dry-run counting."""

    backend_id = "dry-run"
    model_id = "constant"
    REPLIES = {"judge": "C", "score": "50", "few-shot": "Level 1", "reasons": "1. placeholder reason text"}

    def complete(self, prompt: Prompt) -> Completion:
        if prompt.task == "cefr":
            return Completion(prompt.fields["labels"][0])
        if prompt.task == "summarize":
            return Completion("\n".join(f"{i}. Criterion number {i}" for i in range(1, prompt.fields["k"] + 1)))
        return Completion(self.REPLIES[prompt.task])
