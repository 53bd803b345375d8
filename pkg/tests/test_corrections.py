import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from maxrank.corrections import (
    Method,
    bonferroni_correct,
    correct,
    independence_exact_correct,
    independence_level,
    max_rank_correct,
    uncorrected,
)
from maxrank.ranks import RankMatrix, ScoreMatrix, column_ranks, quantile_index
from maxrank.selftest import oracle_global_rank


@pytest.fixture
def four_by_two():
    R = np.array([[1, 2], [2, 1], [3, 4], [4, 3]])
    S = np.array([[0.1, 2.0], [0.2, 1.0], [0.3, 4.0], [0.4, 3.0]])
    return RankMatrix(R), ScoreMatrix(S)


def test_worked_example(four_by_two):
    R, S = four_by_two
    assert_array_equal(R.row_max(), [2, 2, 4, 4])
    res = max_rank_correct(R, S, 0.25)
    # ceil(5 * 0.75) = 4 -> fourth smallest row maximum
    assert res.global_rank == 4
    assert_array_equal(res.per_test_quantiles, [0.4, 4.0])
    assert res.per_test_alpha.tolist() == [0.0, 0.0]
    assert not res.clamped


def test_dimension_mismatch(four_by_two):
    R, _ = four_by_two
    with pytest.raises(ValueError, match="shape"):
        max_rank_correct(R, ScoreMatrix(np.zeros((3, 2))), 0.1)


@pytest.mark.parametrize("n", [1, 5, 19, 200])
def test_single_test_equals_uncorrected(n):
    S = ScoreMatrix(np.random.default_rng(n).standard_normal((n, 1)))
    mr = correct(S, 0.1, "max-rank")
    un = uncorrected(S, 0.1)
    assert mr.global_rank == un.global_rank == quantile_index(n, 0.1).index
    assert_array_equal(mr.per_test_quantiles, un.per_test_quantiles)


def test_identical_columns_reduce_to_single_test():
    col = np.random.default_rng(0).standard_normal(500)
    S = ScoreMatrix(np.column_stack([col, col, col]))
    res = correct(S, 0.05, "max-rank")
    idx = quantile_index(500, 0.05).index
    assert res.global_rank == idx
    assert_allclose(res.per_test_alpha, 1 - idx / 500)


class TestBonferroni:
    def test_level_is_alpha_over_m(self):
        res = bonferroni_correct(ScoreMatrix(np.zeros((50, 5)) + np.arange(50)[:, None]), 0.05)
        assert res.per_test_alpha.tolist() == [0.01] * 5

    def test_single_test(self):
        res = bonferroni_correct(ScoreMatrix(np.arange(30.0)[:, None]), 0.05)
        assert res.per_test_alpha.tolist() == [0.05]

    def test_clamps(self):
        S = ScoreMatrix(np.random.default_rng(1).standard_normal((1000, 100)))
        res = bonferroni_correct(S, 0.05)
        # ceil(1001 * 0.9995) = ceil(1000.4995) = 1001 > 1000
        assert res.clamped and res.global_rank == 1000
        assert_array_equal(res.per_test_quantiles, S.data.max(axis=0))


class TestIndependence:
    def test_level(self):
        res = independence_exact_correct(ScoreMatrix(np.ones((10, 5)) * np.arange(10)[:, None]),
                                         0.05)
        assert_allclose(res.per_test_alpha, 1 - 0.95 ** 0.2, rtol=1e-12)
        assert_allclose(res.per_test_alpha, 0.010206218313011495, rtol=1e-12)

    def test_single_test(self):
        res = independence_exact_correct(ScoreMatrix(np.arange(40.0)[:, None]), 0.05)
        assert res.per_test_alpha.tolist() == [0.05]
        assert res.global_rank == quantile_index(40, 0.05).index

    @given(st.floats(1e-4, 0.999), st.integers(1, 10000))
    def test_never_below_bonferroni(self, alpha, m):
        assert independence_level(alpha, m) >= alpha / m * (1 - 1e-12)


def test_method_parse():
    assert Method.parse("independence") is Method.INDEPENDENCE
    assert Method.parse("MAX-RANK") is Method.MAX_RANK
    with pytest.raises(ValueError, match="unknown correction"):
        Method.parse("holm")


def test_alpha_validation():
    with pytest.raises(ValueError):
        correct(np.zeros((3, 1)), 1.5)


def test_to_dict_shape(four_by_two):
    _, S = four_by_two
    d = correct(S, 0.25, "bonferroni").to_dict()
    assert set(d) == {"method", "global_rank", "clamped", "per_test"}
    assert d["method"] == "bonferroni"
    assert len(d["per_test"]) == 2 and set(d["per_test"][0]) == {"quantile", "alpha"}


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.sampled_from([0.1, 0.25, 0.5]),
       st.integers(0, 2**32))
def test_matches_bruteforce_counting(n, m, alpha, seed):
    rng = np.random.default_rng(seed)
    R = np.column_stack([rng.permutation(n) + 1 for _ in range(m)])
    got = max_rank_correct(RankMatrix(R), ScoreMatrix(R.astype(float)), alpha).global_rank
    assert got == oracle_global_rank(R, alpha)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 300), st.integers(1, 12), st.sampled_from([0.01, 0.05, 0.1, 0.3]),
       st.floats(0, 1), st.integers(0, 2**32))
def test_rank_ordering_against_baselines(n, m, alpha, rho, seed):
    rng = np.random.default_rng(seed)
    S = ScoreMatrix(np.sqrt(rho) * rng.standard_normal((n, 1))
                    + np.sqrt(1 - rho) * rng.standard_normal((n, m)))
    mr = correct(S, alpha, "max-rank").global_rank
    ind = correct(S, alpha, "independence").global_rank
    bon = correct(S, alpha, "bonferroni").global_rank
    # union bound: at most m * (n - t) rows can have a rank above t
    assert mr <= bon
    assert ind <= bon


def test_per_test_alpha_of_rank_methods():
    S = ScoreMatrix(np.random.default_rng(2).standard_normal((300, 4)))
    res = correct(S, 0.1, "max-rank")
    assert_allclose(res.per_test_alpha, 1 - res.global_rank / 300)


def test_quantiles_are_column_entries():
    S = ScoreMatrix(np.random.default_rng(4).standard_normal((120, 6)))
    for method in Method:
        res = correct(S, 0.1, method)
        for k in range(6):
            assert res.per_test_quantiles[k] in S.data[:, k]


def test_monotone_equivariance():
    S = np.random.default_rng(5).standard_normal((200, 3))
    for method in ("max-rank", "bonferroni", "independence"):
        a = correct(S, 0.05, method)
        b = correct(2 * S ** 3 + 1, 0.05, method)
        assert a.global_rank == b.global_rank
        assert_array_equal(a.per_test_alpha, b.per_test_alpha)
        assert_allclose(b.per_test_quantiles, 2 * a.per_test_quantiles ** 3 + 1)


def test_tied_scores_use_seed_only_for_ties():
    S = np.round(np.random.default_rng(6).standard_normal((100, 3)), 1)
    results = {correct(S, 0.1, "max-rank", seed=s).global_rank for s in range(10)}
    assert all(1 <= r <= 100 for r in results)
    assert correct(S, 0.1, "max-rank", seed=3).global_rank == \
        max_rank_correct(column_ranks(S, 3), ScoreMatrix(S), 0.1).global_rank


def test_strong_dependence_beats_independence_index():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((5000, 1))
    S = ScoreMatrix(math.sqrt(0.9) * z + math.sqrt(0.1) * rng.standard_normal((5000, 10)))
    assert correct(S, 0.05, "max-rank").global_rank < correct(S, 0.05, "independence").global_rank
