"""Analytic Hierarchy Process numerics.

Everything here is a pure function of its inputs. Matrices are built from the
five-point judgment scale, priorities come from the principal (Perron)
eigenvector computed by power iteration, and the final score of each answer is
the weighted sum of its per-criterion priorities.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import numpy.typing as npt

from . import _kernels
from .errors import (
    ConvergenceError,
    DuplicateJudgmentError,
    EmptyCriteriaError,
    IncompleteJudgmentsError,
    InvalidMatrixError,
    ShapeError,
    UnsupportedOrderError,
)
from .scale import JudgmentScale

TOL = 1e-10
MAX_ITER = 10_000
RECIPROCITY_RTOL = 1e-12
SUM_ATOL = 1e-9

SCALE_VALUES = frozenset({Fraction(5), Fraction(3), Fraction(1), Fraction(1, 3), Fraction(1, 5)})

# Saaty's random consistency index, orders 1..15.
RANDOM_INDEX = {
    1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41,
    9: 1.45, 10: 1.49, 11: 1.51, 12: 1.48, 13: 1.56, 14: 1.57, 15: 1.59,
}

_VALUE_OF = {
    JudgmentScale.FIRST_MUCH_BETTER: Fraction(5),
    JudgmentScale.FIRST_SLIGHTLY_BETTER: Fraction(3),
    JudgmentScale.TIE: Fraction(1),
    JudgmentScale.SECOND_SLIGHTLY_BETTER: Fraction(1, 3),
    JudgmentScale.SECOND_MUCH_BETTER: Fraction(1, 5),
}
# Literal table: the two "second wins" outcomes are
# swapped relative to the reciprocal assignment, so the matrix is not reciprocal.
_LITERAL_VALUE_OF = {
    **_VALUE_OF,
    JudgmentScale.SECOND_MUCH_BETTER: Fraction(1, 3),
    JudgmentScale.SECOND_SLIGHTLY_BETTER: Fraction(1, 5),
}


@dataclass(frozen=True)
class JudgmentValue:
    """An entry of a comparison matrix; only the five scale constants exist."""

    value: Fraction

    def __post_init__(self) -> None:
        if Fraction(self.value) not in SCALE_VALUES:
            raise ValueError(f"{self.value} is not on the 5/3/1/1/3/1/5 scale")
        object.__setattr__(self, "value", Fraction(self.value))

    def __float__(self) -> float:
        return float(self.value)

    def reciprocal(self) -> JudgmentValue:
        return JudgmentValue(1 / self.value)


def _readonly(a: npt.ArrayLike) -> npt.NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PairwiseMatrix:
    """Positive matrix with unit diagonal; reciprocal unless built in literal mode."""

    entries: npt.NDArray[np.float64]
    reciprocal: bool = True

    def __post_init__(self) -> None:
        a = _readonly(self.entries)
        object.__setattr__(self, "entries", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ShapeError(f"pairwise matrix must be square and non-empty, got {a.shape}")
        check_pairwise(a, reciprocal=self.reciprocal)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def check_pairwise(a: npt.NDArray[np.float64], *, reciprocal: bool = True) -> None:
    if not np.all(np.isfinite(a)) or not np.all(a > 0):
        raise InvalidMatrixError("entries must be finite and strictly positive")
    if not np.all(np.diag(a) == 1.0):
        raise InvalidMatrixError("diagonal entries must equal 1")
    if reciprocal:
        bad = np.abs(a * a.T - 1.0) > RECIPROCITY_RTOL
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise InvalidMatrixError(f"entries ({i},{j}) and ({j},{i}) are not reciprocal")


@dataclass(frozen=True)
class ComparisonTensor:
    """``k`` stacked comparison matrices of order ``n``, one per criterion."""

    slices: npt.NDArray[np.float64]
    reciprocal: bool = True

    def __post_init__(self) -> None:
        a = _readonly(self.slices)
        object.__setattr__(self, "slices", a)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ShapeError(f"tensor must be k x n x n, got {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 2:
            raise ShapeError(f"tensor needs k >= 1 and n >= 2, got {a.shape}")
        for c in range(a.shape[0]):
            try:
                check_pairwise(a[c], reciprocal=self.reciprocal)
            except InvalidMatrixError as exc:
                raise InvalidMatrixError(f"criterion {c}: {exc}") from exc

    @classmethod
    def from_matrices(cls, matrices: Sequence[PairwiseMatrix | npt.ArrayLike]) -> ComparisonTensor:
        mats = [m.entries if isinstance(m, PairwiseMatrix) else np.asarray(m, float) for m in matrices]
        recip = all(getattr(m, "reciprocal", True) for m in matrices)
        return cls(np.stack(mats), reciprocal=recip)

    @property
    def criteria_count(self) -> int:
        return self.slices.shape[0]

    @property
    def response_count(self) -> int:
        return self.slices.shape[1]

    def subset(self, criteria: Sequence[int]) -> ComparisonTensor:
        return ComparisonTensor(self.slices[list(criteria)], reciprocal=self.reciprocal)


@dataclass(frozen=True)
class WeightVector:
    weights: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        w = _readonly(self.weights)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise ShapeError("weights must be a non-empty vector")
        if not np.all(w > 0) or abs(w.sum() - 1.0) > SUM_ATOL:
            raise ValueError("weights must be positive and sum to 1")

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class CriterionScoreMatrix:
    """Rows are criteria, columns responses; each row sums to one."""

    scores: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        s = _readonly(self.scores)
        object.__setattr__(self, "scores", s)
        if s.ndim != 2:
            raise ShapeError("criterion scores must be k x n")
        if not np.all(s > 0) or np.any(np.abs(s.sum(axis=1) - 1.0) > SUM_ATOL):
            raise ValueError("criterion score rows must be positive and L1-normalised")


def _natural_key(token: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", str(token)))


RANK_DECIMALS = 12


def rank_by_score(scores: Sequence[float], ids: Sequence[str]) -> list[str]:
    """Descending score; ties go to the smaller id (digit runs compared numerically).

    Scores are compared after rounding to ``RANK_DECIMALS`` places so that
    floating-point noise does not decide ties.
    """
    rounded = [round(float(s), RANK_DECIMALS) for s in scores]
    order = sorted(range(len(ids)), key=lambda i: (-rounded[i], _natural_key(ids[i])))
    return [ids[i] for i in order]


@dataclass(frozen=True)
class FinalScores:
    scores: npt.NDArray[np.float64]
    ids: tuple[str, ...] = field(default=())
    ranking: tuple[str, ...] = field(default=(), init=False)

    def __post_init__(self) -> None:
        s = _readonly(self.scores)
        object.__setattr__(self, "scores", s)
        ids = tuple(str(i) for i in self.ids) or tuple(str(i) for i in range(s.size))
        if len(ids) != s.size:
            raise ShapeError(f"{len(ids)} ids for {s.size} scores")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "ranking", tuple(rank_by_score(s.tolist(), ids)))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.scores.tolist()))


# --- operations --------------------------------------------------------------


def judgment_to_value(judgment: JudgmentScale, *, literal: bool = False) -> JudgmentValue:
    """Matrix entry (i, j) for a judgment about answer i (first) versus j (second)."""
    table = _LITERAL_VALUE_OF if literal else _VALUE_OF
    return JudgmentValue(table[JudgmentScale(judgment)])


def _iter_judgments(judgments) -> Iterable[tuple[tuple[int, int], JudgmentScale]]:
    if isinstance(judgments, Mapping):
        return judgments.items()
    return judgments


def build_comparison_matrix(
    judgments: Mapping[tuple[int, int], JudgmentScale] | Iterable[tuple[tuple[int, int], JudgmentScale]],
    n: int,
    *,
    literal: bool = False,
) -> PairwiseMatrix:
    """Fill an ``n x n`` matrix from one judgment per unordered pair.

    A key ``(i, j)`` means answer ``i`` was shown first. The mirrored entry is
    the reciprocal (or, with ``literal``, the value of the mirrored judgment).
    """
    exact: dict[tuple[int, int], Fraction] = {}
    for (a, b), judgment in _iter_judgments(judgments):
        a, b = int(a), int(b)
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise ShapeError(f"invalid pair ({a}, {b}) for n={n}")
        key = (min(a, b), max(a, b))
        if key in exact:
            raise DuplicateJudgmentError(key)
        judgment = JudgmentScale(judgment)
        oriented = judgment if a < b else judgment.mirror()
        exact[key] = judgment_to_value(oriented, literal=literal).value
        if literal:
            exact[(key[1], key[0])] = judgment_to_value(oriented.mirror(), literal=True).value

    m = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in exact:
                raise IncompleteJudgmentsError((i, j))
            upper = exact[(i, j)]
            lower = exact[(j, i)] if literal else 1 / upper
            m[i, j] = float(upper)
            m[j, i] = float(lower)
    return PairwiseMatrix(m, reciprocal=not literal)


def build_preference_matrix(k: int) -> PairwiseMatrix:
    """Criteria importance matrix for criteria already ranked best-first."""
    if k < 1:
        raise EmptyCriteriaError("at least one criterion is required")
    idx = np.arange(k)
    m = np.where(idx[:, None] < idx[None, :], 3.0, np.where(idx[:, None] > idx[None, :], 1 / 3, 1.0))
    return PairwiseMatrix(m)


def principal_eigenpair(
    matrix: PairwiseMatrix | npt.ArrayLike, *, tol: float = TOL, max_iter: int = MAX_ITER
) -> tuple[npt.NDArray[np.float64], float]:
    """Perron vector (L1-normalised) and its eigenvalue (Rayleigh quotient)."""
    a = matrix.entries if isinstance(matrix, PairwiseMatrix) else np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got {a.shape}")
    if not np.all(a > 0):
        raise InvalidMatrixError("power iteration needs a strictly positive matrix")
    v, iterations, residual, converged = _kernels.power_iteration(a, tol, max_iter)
    if not converged:
        raise ConvergenceError("power iteration did not converge", residual, iterations)
    mv = a @ v
    return v, float(v @ mv / (v @ v))


def principal_eigenvector(
    matrix: PairwiseMatrix | npt.ArrayLike, *, tol: float = TOL, max_iter: int = MAX_ITER
) -> npt.NDArray[np.float64]:
    return principal_eigenpair(matrix, tol=tol, max_iter=max_iter)[0]


def criteria_weights(k: int) -> WeightVector:
    return WeightVector(principal_eigenvector(build_preference_matrix(k)))


def criterion_scores(tensor: ComparisonTensor) -> CriterionScoreMatrix:
    rows = []
    for c in range(tensor.criteria_count):
        try:
            rows.append(principal_eigenvector(tensor.slices[c]))
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"criterion {c}: power iteration did not converge", exc.residual, exc.iterations
            ) from exc
    return CriterionScoreMatrix(np.vstack(rows))


def aggregate_scores(
    scores: CriterionScoreMatrix, weights: WeightVector, ids: Sequence[str] = ()
) -> FinalScores:
    s = scores.scores
    w = weights.weights
    if s.shape[0] != w.size:
        raise ShapeError(f"{s.shape[0]} criterion rows but {w.size} weights")
    return FinalScores(w @ s, ids=tuple(ids))


def score_tensor(tensor: ComparisonTensor, ids: Sequence[str] = ()) -> FinalScores:
    """Full aggregation: per-criterion priorities combined with rank-derived weights."""
    return aggregate_scores(criterion_scores(tensor), criteria_weights(tensor.criteria_count), ids)


def consistency_ratio(matrix: PairwiseMatrix | npt.ArrayLike) -> float:
    a = matrix.entries if isinstance(matrix, PairwiseMatrix) else np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    if n > max(RANDOM_INDEX):
        raise UnsupportedOrderError(f"no random index for order {n} (max {max(RANDOM_INDEX)})")
    if n <= 2:
        return 0.0
    _, lam = principal_eigenpair(a)
    return max(0.0, (lam - n) / (n - 1) / RANDOM_INDEX[n])
