"""Agreement with ground truth, judgment-option statistics, and criteria ablation."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from itertools import combinations
from math import comb

import numpy as np
import numpy.typing as npt

from . import _kernels, ahp
from .dataset import GroundTruth
from .errors import ShapeError, UndefinedMetricError
from .judge import JudgeRecord
from .scale import JudgmentScale

MAX_SUBSETS = 256


def _align(f, g, ids: Sequence[str] | None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(g, GroundTruth):
        if ids is None:
            ids = list(g.values)
        g = g.oriented(ids)
    elif isinstance(g, Mapping):
        ids = list(g) if ids is None else ids
        g = np.array([g[i] for i in ids], dtype=np.float64)
    if isinstance(f, Mapping):
        if ids is None:
            raise ShapeError("score mapping needs ids or a keyed ground truth")
        missing = [i for i in ids if i not in f]
        if missing:
            raise ShapeError(f"no score for ids {missing[:5]}")
        f = np.array([f[i] for i in ids], dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1:
        raise ShapeError(f"scores {f.shape} and truth {g.shape} do not align")
    return f, g


def concordance_counts(f, g, *, gap: float | None = None, ids: Sequence[str] | None = None) -> tuple[int, int]:
    """``(concordant, qualifying)`` ordered-pair counts; ``gap`` restricts to significant pairs."""
    f, g = _align(f, g, ids)
    if gap is None:
        return _kernels.concordance_counts(f, g, 0.0, False)
    return _kernels.concordance_counts(f, g, float(gap), True)


def concordance_index(f, g, *, ids: Sequence[str] | None = None) -> float:
    """Share of truth-ordered pairs ``g_i > g_j`` that ``f`` also orders strictly."""
    c, t = concordance_counts(f, g, ids=ids)
    if t == 0:
        raise UndefinedMetricError("ground truth has no strictly ordered pair")
    return c / t


def soft_concordance_index(f, g, threshold: float, *, ids: Sequence[str] | None = None) -> float:
    """Concordance restricted to pairs whose truth values differ by at least ``threshold``."""
    c, t = concordance_counts(f, g, gap=threshold, ids=ids)
    if t == 0:
        raise UndefinedMetricError(f"no pair has a ground-truth gap >= {threshold}")
    return c / t


@dataclass(frozen=True)
class MetricReport:
    ci: float
    sci: float | None
    gap: float
    concordant: int
    total: int
    sig_concordant: int
    sig_total: int

    def to_json(self) -> dict:
        return asdict(self)


def evaluate_scores(
    scores: Mapping[str, float], truth: GroundTruth, *, gap: float | None = None
) -> MetricReport:
    """CI and sCI of ``scores`` against ``truth``; sCI is ``None`` when no pair is significant."""
    ids = list(truth.values)
    gap = truth.default_gap if gap is None else gap
    c, t = concordance_counts(scores, truth, ids=ids)
    if t == 0:
        raise UndefinedMetricError("ground truth has no strictly ordered pair")
    sc, st = concordance_counts(scores, truth, gap=gap, ids=ids)
    return MetricReport(c / t, sc / st if st else None, gap, c, t, sc, st)


# --- judgment statistics -----------------------------------------------------------


def _largest_remainder(counts: Sequence[int], total_units: int) -> list[int]:
    n = sum(counts)
    exact = [c * total_units / n for c in counts]
    floors = [math.floor(x) for x in exact]
    short = total_units - sum(floors)
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return floors


def judgment_distribution(records: Sequence[JudgeRecord | JudgmentScale]) -> dict[str, float]:
    """Percentage of each option, to one decimal, summing to exactly 100."""
    if not records:
        raise ValueError("no judgments to summarise")
    variants = list(JudgmentScale)
    counts = [0] * len(variants)
    for r in records:
        counts[variants.index(r.parsed if isinstance(r, JudgeRecord) else JudgmentScale(r))] += 1
    tenths = _largest_remainder(counts, 1000)
    return {v.value: t / 10 for v, t in zip(variants, tenths)}


# --- ablation ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationResult:
    subset_size: int
    subsets: tuple[tuple[int, ...], ...]
    ci: tuple[float, ...]

    @property
    def stats(self) -> dict[str, float]:
        x = np.asarray(self.ci)
        return {
            "min": float(x.min()),
            "q1": float(np.percentile(x, 25)),
            "median": float(np.median(x)),
            "mean": float(x.mean()),
            "q3": float(np.percentile(x, 75)),
            "max": float(x.max()),
        }

    def csv_row(self) -> tuple:
        s = self.stats
        return (self.subset_size, s["min"], s["q1"], s["mean"], s["q3"], s["max"])

    def to_json(self) -> dict:
        return {
            "subset_size": self.subset_size,
            "n_subsets": len(self.subsets),
            "stats": self.stats,
            "subsets": [list(s) for s in self.subsets],
            "ci": list(self.ci),
        }


ABLATION_CSV_HEADER = ("subset_size", "min", "q1", "mean", "q3", "max")


def choose_subsets(k: int, j: int, *, max_subsets: int = MAX_SUBSETS, seed: int = 0) -> list[tuple[int, ...]]:
    """All ``j``-subsets of ``range(k)`` if there are at most ``max_subsets``, else a seeded sample."""
    if not 1 <= j <= k:
        raise ValueError(f"subset size must be in 1..{k}, got {j}")
    total = comb(k, j)
    if total <= max_subsets:
        return list(combinations(range(k), j))
    rng = np.random.default_rng(seed)
    if total <= 1_000_000:
        every = list(combinations(range(k), j))
        picked = np.sort(rng.choice(total, size=max_subsets, replace=False))
        return [every[i] for i in picked]
    seen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < max_subsets:
        s = tuple(sorted(rng.choice(k, size=j, replace=False).tolist()))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def criteria_ablation(
    tensor: ahp.ComparisonTensor,
    truth: GroundTruth | npt.ArrayLike,
    subset_size: int,
    *,
    ids: Sequence[str] | None = None,
    max_subsets: int = MAX_SUBSETS,
    seed: int = 0,
    rows: ahp.CriterionScoreMatrix | None = None,
) -> AblationResult:
    """CI for every chosen subset of criteria, each rescored with its own rank-derived weights.

    Subsets keep the original relative order, so the first kept criterion
    still gets the largest weight.
    """
    k = tensor.criteria_count
    subsets = choose_subsets(k, subset_size, max_subsets=max_subsets, seed=seed)
    rows = rows if rows is not None else ahp.criterion_scores(tensor)
    weights = ahp.criteria_weights(subset_size)
    cis = []
    for subset in subsets:
        sub = ahp.CriterionScoreMatrix(rows.scores[list(subset)])
        final = ahp.aggregate_scores(sub, weights)
        cis.append(concordance_index(final.scores, truth, ids=ids))
    return AblationResult(subset_size, tuple(subsets), tuple(cis))
