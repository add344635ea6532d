from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahp_eval import _kernels
from ahp_eval.ahp import (
    ComparisonTensor,
    CriterionScoreMatrix,
    JudgmentValue,
    PairwiseMatrix,
    WeightVector,
    aggregate_scores,
    build_comparison_matrix,
    build_preference_matrix,
    consistency_ratio,
    criteria_weights,
    criterion_scores,
    judgment_to_value,
    principal_eigenpair,
    principal_eigenvector,
    score_tensor,
)
from ahp_eval.errors import (
    ConvergenceError,
    DuplicateJudgmentError,
    EmptyCriteriaError,
    IncompleteJudgmentsError,
    InvalidMatrixError,
    ShapeError,
    UnsupportedOrderError,
)
from ahp_eval.scale import JudgmentScale as J

from conftest import dense_perron, random_reciprocal

ALL = list(J)


class TestJudgmentValue:
    def test_scale_constants(self):
        assert judgment_to_value(J.FIRST_MUCH_BETTER).value == 5
        assert judgment_to_value(J.FIRST_SLIGHTLY_BETTER).value == 3
        assert judgment_to_value(J.TIE).value == 1
        assert judgment_to_value(J.SECOND_SLIGHTLY_BETTER).value == Fraction(1, 3)
        assert judgment_to_value(J.SECOND_MUCH_BETTER).value == Fraction(1, 5)

    @pytest.mark.parametrize("j", ALL)
    def test_mirror_is_reciprocal(self, j):
        assert judgment_to_value(j).value * judgment_to_value(j.mirror()).value == 1

    def test_second_much_better_entries(self):
        m = build_comparison_matrix({(0, 1): J.SECOND_MUCH_BETTER}, 2)
        assert m.entries[0, 1] == pytest.approx(0.2)
        assert m.entries[1, 0] == 5.0

    def test_off_scale_rejected(self):
        with pytest.raises(ValueError):
            JudgmentValue(Fraction(7))
        with pytest.raises(ValueError):
            JudgmentValue(Fraction(1, 2))

    def test_literal_variant(self):
        assert judgment_to_value(J.SECOND_MUCH_BETTER, literal=True).value == Fraction(1, 3)
        assert judgment_to_value(J.SECOND_SLIGHTLY_BETTER, literal=True).value == Fraction(1, 5)
        m = build_comparison_matrix({(0, 1): J.FIRST_MUCH_BETTER}, 2, literal=True)
        np.testing.assert_array_equal(m.entries, [[1, 5], [1 / 3, 1]])
        assert not m.reciprocal


class TestBuildComparisonMatrix:
    def test_n2(self):
        m = build_comparison_matrix({(0, 1): J.FIRST_MUCH_BETTER}, 2)
        np.testing.assert_array_equal(m.entries, [[1, 5], [1 / 5, 1]])

    def test_all_ties(self):
        m = build_comparison_matrix({(0, 1): J.TIE, (0, 2): J.TIE, (1, 2): J.TIE}, 3)
        np.testing.assert_array_equal(m.entries, np.ones((3, 3)))

    def test_n3_mixed(self):
        m = build_comparison_matrix(
            {(0, 1): J.FIRST_SLIGHTLY_BETTER, (0, 2): J.FIRST_MUCH_BETTER, (1, 2): J.FIRST_SLIGHTLY_BETTER},
            3,
        )
        np.testing.assert_allclose(m.entries, [[1, 3, 5], [1 / 3, 1, 3], [1 / 5, 1 / 3, 1]], rtol=0, atol=1e-15)
        np.testing.assert_allclose(m.entries * m.entries.T, 1.0, rtol=1e-12)

    def test_reversed_key_is_mirrored(self):
        a = build_comparison_matrix({(1, 0): J.FIRST_MUCH_BETTER}, 2)
        np.testing.assert_array_equal(a.entries, [[1, 1 / 5], [5, 1]])

    def test_missing_pair_named(self):
        with pytest.raises(IncompleteJudgmentsError) as ei:
            build_comparison_matrix({(0, 1): J.TIE, (1, 2): J.TIE}, 3)
        assert ei.value.pair == (0, 2)

    def test_duplicate(self):
        with pytest.raises(DuplicateJudgmentError):
            build_comparison_matrix([((0, 1), J.TIE), ((1, 0), J.TIE)], 2)

    def test_bad_index(self):
        with pytest.raises(ShapeError):
            build_comparison_matrix({(0, 2): J.TIE}, 2)


class TestPreferenceMatrix:
    def test_k1(self):
        np.testing.assert_array_equal(build_preference_matrix(1).entries, [[1]])

    def test_k2(self):
        np.testing.assert_array_equal(build_preference_matrix(2).entries, [[1, 3], [1 / 3, 1]])

    def test_k3(self):
        np.testing.assert_array_equal(
            build_preference_matrix(3).entries, [[1, 3, 3], [1 / 3, 1, 3], [1 / 3, 1 / 3, 1]]
        )

    def test_k0(self):
        with pytest.raises(EmptyCriteriaError):
            build_preference_matrix(0)


class TestPairwiseMatrixValidation:
    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidMatrixError):
            PairwiseMatrix([[1, -1], [-1, 1]])

    def test_rejects_bad_diagonal(self):
        with pytest.raises(InvalidMatrixError):
            PairwiseMatrix([[2, 1], [1, 1]])

    def test_rejects_nonreciprocal(self):
        with pytest.raises(InvalidMatrixError):
            PairwiseMatrix([[1, 3], [1 / 5, 1]])

    def test_entries_are_frozen(self):
        m = build_preference_matrix(2)
        with pytest.raises(ValueError):
            m.entries[0, 1] = 9

    def test_tensor_shape_checks(self):
        with pytest.raises(ShapeError):
            ComparisonTensor(np.ones((1, 1, 1)))
        with pytest.raises(ShapeError):
            ComparisonTensor(np.ones((0, 3, 3)))


class TestEigenvector:
    def test_uniform(self):
        np.testing.assert_allclose(principal_eigenvector(np.ones((3, 3))), [1 / 3] * 3, atol=1e-15)

    def test_2x2_closed_form(self):
        a = np.array([[1, 3], [1 / 3, 1]])
        # M (3,1)^T = (6, 2)^T = 2 (3,1)^T
        np.testing.assert_allclose(a @ [3, 1], 2 * np.array([3, 1]))
        v, lam = principal_eigenpair(a)
        np.testing.assert_allclose(v, [0.75, 0.25], atol=1e-12)
        assert lam == pytest.approx(2.0, abs=1e-10)

    def test_consistent_recovers_weights(self):
        v = np.array([4.0, 2.0, 1.0])
        np.testing.assert_allclose(principal_eigenvector(v[:, None] / v[None, :]), [4 / 7, 2 / 7, 1 / 7], atol=1e-12)

    def test_non_convergence(self):
        with pytest.raises(ConvergenceError) as ei:
            principal_eigenvector(np.array([[1, 5], [1 / 5, 1]]), max_iter=1, tol=0.0)
        assert ei.value.residual > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_numba_and_numpy_paths_agree(self, seed):
        a = random_reciprocal(np.random.default_rng(seed), 12)
        v1, it1, _, ok1 = _kernels.power_iteration_numpy(a, 1e-10, 10_000)
        v2, it2, _, ok2 = _kernels.power_iteration_numba(a, 1e-10, 10_000)
        assert ok1 and ok2 and it1 == it2
        np.testing.assert_allclose(v1, v2, rtol=0, atol=1e-13)

    def test_against_dense_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 13))
            a = random_reciprocal(rng, n, scale=bool(rng.integers(2)))
            np.testing.assert_allclose(principal_eigenvector(a), dense_perron(a), rtol=0, atol=1e-8)


class TestWeights:
    def test_k1(self):
        np.testing.assert_array_equal(criteria_weights(1).weights, [1.0])

    def test_k2(self):
        np.testing.assert_allclose(criteria_weights(2).weights, [0.75, 0.25], atol=1e-12)

    def test_k3_matches_oracle(self):
        w = criteria_weights(3).weights
        np.testing.assert_allclose(w, dense_perron(build_preference_matrix(3).entries), atol=1e-8)
        assert w[0] > w[1] > w[2]
        assert w.sum() == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("k", range(2, 17))
    def test_strictly_decreasing(self, k):
        w = criteria_weights(k).weights
        assert np.all(np.diff(w) < 0)
        assert abs(w.sum() - 1) < 1e-9

    def test_weight_vector_validation(self):
        with pytest.raises(ValueError):
            WeightVector([0.5, 0.6])


class TestCriterionScores:
    def test_all_ones(self):
        s = criterion_scores(ComparisonTensor(np.ones((1, 4, 4))))
        np.testing.assert_allclose(s.scores, [[0.25] * 4], atol=1e-15)

    def test_identical_slices(self):
        a = random_reciprocal(np.random.default_rng(1), 5)
        s = criterion_scores(ComparisonTensor(np.stack([a, a])))
        np.testing.assert_array_equal(s.scores[0], s.scores[1])

    def test_2x2(self):
        s = criterion_scores(ComparisonTensor(np.array([[[1, 5], [1 / 5, 1]]])))
        np.testing.assert_allclose(s.scores, [[5 / 6, 1 / 6]], atol=1e-12)


class TestAggregate:
    def test_k1_returns_row(self):
        s = CriterionScoreMatrix([[0.1, 0.2, 0.7]])
        np.testing.assert_allclose(aggregate_scores(s, WeightVector([1.0])).scores, [0.1, 0.2, 0.7])

    def test_worked_example(self):
        s = CriterionScoreMatrix([[0.6, 0.4], [0.2, 0.8]])
        out = aggregate_scores(s, WeightVector([0.75, 0.25]))
        np.testing.assert_allclose(out.scores, [0.5, 0.5], atol=1e-15)
        assert out.ranking == ("0", "1")  # tie broken by ascending id

    def test_one_hot(self):
        s = CriterionScoreMatrix([[0.6, 0.4], [0.2, 0.8]])
        # one-hot weights cannot be a WeightVector (weights must be > 0); use the limit directly
        np.testing.assert_allclose(np.array([0.0, 1.0]) @ s.scores, [0.2, 0.8])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            aggregate_scores(CriterionScoreMatrix([[0.5, 0.5]]), WeightVector([0.75, 0.25]))

    def test_natural_id_tiebreak(self):
        from ahp_eval.ahp import FinalScores

        fs = FinalScores([0.25] * 4, ids=("r10", "r2", "r1", "r3"))
        assert fs.ranking == ("r1", "r2", "r3", "r10")


class TestConsistencyRatio:
    def test_consistent(self):
        v = np.array([4.0, 2.0, 1.0])
        assert consistency_ratio(v[:, None] / v[None, :]) == pytest.approx(0.0, abs=1e-9)

    def test_2x2(self):
        assert consistency_ratio([[1, 7], [1 / 7, 1]]) == 0.0

    def test_intransitive(self):
        m = build_comparison_matrix(
            {(0, 1): J.FIRST_MUCH_BETTER, (1, 2): J.FIRST_MUCH_BETTER, (0, 2): J.SECOND_MUCH_BETTER}, 3
        ).entries
        lam = np.max(np.real(np.linalg.eigvals(m)))
        expected = (lam - 3) / 2 / 0.58
        assert expected > 0
        assert consistency_ratio(m) == pytest.approx(expected, rel=1e-8)

    def test_order_limit(self):
        with pytest.raises(UnsupportedOrderError):
            consistency_ratio(np.ones((16, 16)))


# --- properties --------------------------------------------------------------

judgment_st = st.sampled_from(ALL)


@st.composite
def judgment_tables(draw, max_n=9):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return n, {p: draw(judgment_st) for p in pairs}


@settings(max_examples=200, derandomize=True, deadline=None)
@given(judgment_tables())
def test_reciprocity_and_diagonal(table):
    n, judgments = table
    m = build_comparison_matrix(judgments, n).entries
    assert np.all(np.diag(m) == 1.0)
    np.testing.assert_allclose(m * m.T, 1.0, rtol=1e-12)


@settings(max_examples=100, derandomize=True, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=2, max_size=10))
def test_perron_recovery(v):
    v = np.array(v)
    got = principal_eigenvector(v[:, None] / v[None, :])
    np.testing.assert_allclose(got, v / v.sum(), rtol=0, atol=1e-8)


@settings(max_examples=150, derandomize=True, deadline=None)
@given(st.integers(1, 4), judgment_tables(max_n=7), st.randoms(use_true_random=False))
def test_normalisation_and_permutation_equivariance(k, table, rnd):
    n, base = table
    slices = []
    for c in range(k):
        shuffled = {p: ALL[(ALL.index(j) + c * rnd.randint(0, 4)) % 5] for p, j in base.items()}
        slices.append(build_comparison_matrix(shuffled, n).entries)
    tensor = ComparisonTensor(np.stack(slices))
    rows = criterion_scores(tensor)
    np.testing.assert_allclose(rows.scores.sum(axis=1), 1.0, atol=1e-9)
    final = score_tensor(tensor)
    assert abs(final.scores.sum() - 1) < 1e-9

    perm = np.array(rnd.sample(range(n), n))
    permuted = ComparisonTensor(tensor.slices[:, perm][:, :, perm])
    np.testing.assert_allclose(score_tensor(permuted).scores, final.scores[perm], rtol=0, atol=1e-12)


def test_weak_wins_alone_do_not_guarantee_top_rank():
    # 0 never loses, yet 1 beats the remaining answer by more, so 1 ends on top.
    m = build_comparison_matrix(
        {(0, 1): J.TIE, (0, 2): J.FIRST_SLIGHTLY_BETTER, (1, 2): J.FIRST_MUCH_BETTER}, 3
    )
    v = principal_eigenvector(m)
    assert v[1] > v[0]


@settings(max_examples=150, derandomize=True, deadline=None)
@given(st.integers(1, 4), st.integers(2, 7), st.data())
def test_argmax_dominance(k, n, data):
    """A response whose matrix row dominates every other row, under every criterion, ranks first."""
    winner = data.draw(st.integers(0, n - 1))
    slices = []
    for _ in range(k):
        judgments = {}
        for i in range(n):
            for j in range(i + 1, n):
                if winner in (i, j):
                    # beating everyone by the top margin makes row `winner` entrywise maximal
                    j_ = J.FIRST_MUCH_BETTER
                    judgments[(i, j)] = j_ if winner == i else j_.mirror()
                else:
                    judgments[(i, j)] = data.draw(judgment_st)
        slices.append(build_comparison_matrix(judgments, n).entries)
    a = np.stack(slices)
    for c in range(k):
        assert np.all(a[c, winner] >= a[c])
    scores = score_tensor(ComparisonTensor(a)).scores
    assert np.argmax(scores) == winner
    assert np.sum(scores == scores.max()) == 1


@settings(max_examples=150, derandomize=True, deadline=None)
@given(st.integers(3, 7), st.data())
def test_row_dominance_orders_scores(n, data):
    """Entrywise row dominance (strict somewhere) implies a strictly larger priority."""
    judgments = {(i, j): data.draw(judgment_st) for i in range(n) for j in range(i + 1, n)}
    a = build_comparison_matrix(judgments, n).entries
    v = principal_eigenvector(a)
    for i in range(n):
        for j in range(n):
            if i != j and np.all(a[i] >= a[j]) and np.any(a[i] > a[j]):
                assert v[i] > v[j]
