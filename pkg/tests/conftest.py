from __future__ import annotations

import numpy as np
import pytest

from ahp_eval.dataset import GroundTruth, Response, ResponseSet

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def dense_perron(a: np.ndarray) -> np.ndarray:
    """Independent oracle: LAPACK eigendecomposition, Perron vector L1-normalised."""
    vals, vecs = np.linalg.eig(a)
    v = np.real(vecs[:, np.argmax(np.real(vals))])
    return v / v.sum()


def random_reciprocal(rng: np.random.Generator, n: int, scale: bool = False) -> np.ndarray:
    if scale:
        vals = np.array([5, 3, 1, 1 / 3, 1 / 5])
        upper = rng.choice(vals, size=(n, n))
    else:
        upper = np.exp(rng.uniform(-2.5, 2.5, size=(n, n)))
    iu = np.triu_indices(n, 1)
    a = np.ones((n, n))
    a[iu] = upper[iu]
    a[iu[1], iu[0]] = 1 / upper[iu]
    return a


def make_dataset(n: int, *, truth: str | None = "ranking", question: str = "Q?") -> ResponseSet:
    responses = tuple(Response(f"r{i:02d}", f"answer text number {i}") for i in range(n))
    gt = None
    if truth == "ranking":
        # r00 is the worst answer, r{n-1} the best
        gt = GroundTruth.ranking({f"r{i:02d}": n - i for i in range(n)})
    elif truth == "levels":
        gt = GroundTruth.levels({f"r{i:02d}": 1 + (4 * i) // n for i in range(n)})
    return ResponseSet(question, responses, gt)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance_record():
    def record(name: str, ok: bool, detail: str = "") -> None:
        _ACCEPTANCE[name] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def ordered_oracle(dataset: ResponseSet, k: int, *, noise: float = 0.0, seed: int = 0, **kw):
    """Oracle whose hidden quality rises with response index, identical under every criterion."""
    from ahp_eval.backends import OracleBackend, OracleProfile

    n = dataset.n
    qualities = {rid: [i / (n - 1)] * k for i, rid in enumerate(dataset.ids)}
    return OracleBackend(OracleProfile(qualities, noise=noise, seed=seed, **kw))


CRITERIA = (
    "Clarity and Coherence",
    "Depth of Analysis",
    "Use of Evidence and Examples",
    "Grammar and Language Proficiency",
    "Logical Argumentation",
    "Structure and Organisation",
    "Argument Development",
    "Critical Thinking",
    "Supporting Details",
    "Use of Personal Experience",
)
