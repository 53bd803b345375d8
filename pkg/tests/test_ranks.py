import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_array_equal

from maxrank.ranks import (
    RankMatrix,
    ScoreMatrix,
    TieError,
    column_ranks,
    quantile_index,
    rank_of,
)


def _ceil_div(a, b):
    return -(-a // b)


class TestRankOf:
    @pytest.mark.parametrize("x, expected", [(3.2, 3), (1.1, 1), (2.5, 2)])
    def test_examples(self, x, expected):
        assert rank_of(x, [1.1, 3.2, 2.5]) == expected

    def test_duplicates_rejected(self):
        with pytest.raises(TieError):
            rank_of(1.0, [1.0, 1.0, 2.0])

    def test_not_in_pool(self):
        with pytest.raises(ValueError):
            rank_of(9.0, [1.0, 2.0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30, unique=True))
    def test_matches_count(self, pool):
        for x in pool:
            assert rank_of(x, pool) == sum(1 for p in pool if p <= x)


class TestScoreMatrix:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ScoreMatrix([[1.0, np.nan]])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ScoreMatrix(np.zeros((0, 3)))

    def test_immutable(self):
        S = ScoreMatrix([[1.0, 2.0]])
        with pytest.raises(ValueError):
            S.data[0, 0] = 5

    def test_csv_roundtrip_is_lossless(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-12, 12, (7, 3))
        path = tmp_path / "s.csv"
        ScoreMatrix(data).to_csv(path)
        assert path.read_text().splitlines()[0] == "test_1,test_2,test_3"
        assert_array_equal(ScoreMatrix.from_csv(path).data, data)

    def test_csv_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("test_1,test_2\n1,2\n3\n")
        with pytest.raises(ValueError, match="expected 2 fields"):
            ScoreMatrix.from_csv(path)


class TestColumnRanks:
    def test_strict_order(self):
        assert_array_equal(column_ranks([[0.3], [0.1], [0.2]]).data[:, 0], [3, 1, 2])

    def test_constant_column_flags_degenerate(self):
        R = column_ranks([[5.0], [5.0], [5.0]], seed=11)
        assert sorted(R.data[:, 0]) == [1, 2, 3]
        assert R.degenerate[0] and R.tied[0]

    @pytest.mark.parametrize("seed", [0, 1, 99])
    def test_identical_columns_get_identical_ranks(self, seed):
        col = np.array([1.0, 2.0, 2.0, 0.5, 2.0, 1.0])
        R = column_ranks(np.column_stack([col, col]), seed=seed)
        assert_array_equal(R.data[:, 0], R.data[:, 1])
        assert R.tied.all()

    def test_ties_keep_strict_order(self):
        col = np.array([3.0, 1.0, 3.0, 2.0, 1.0])
        r = column_ranks(col[:, None], seed=5).data[:, 0]
        assert set(r[col == 1.0]) == {1, 2}
        assert r[3] == 3
        assert set(r[col == 3.0]) == {4, 5}

    def test_tie_breaking_depends_on_seed(self):
        col = np.zeros(40)
        col[::2] = 1.0
        outcomes = {tuple(column_ranks(col[:, None], seed=s).data[:, 0]) for s in range(5)}
        assert len(outcomes) > 1

    def test_rank_matrix_validates(self):
        with pytest.raises(ValueError):
            RankMatrix(np.array([[1, 1], [2, 3]]))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 25), st.integers(1, 4)),
                  elements=st.floats(-100, 100)),
           st.integers(0, 2**32))
    def test_columns_are_permutations(self, data, seed):
        R = column_ranks(data, seed=seed)
        n = data.shape[0]
        assert np.all(R.data.sum(axis=0) == n * (n + 1) // 2)
        assert_array_equal(np.sort(R.data, axis=0),
                           np.repeat(np.arange(1, n + 1)[:, None], data.shape[1], axis=1))
        for k in range(data.shape[1]):
            s, r = data[:, k], R.data[:, k]
            less = s[:, None] < s[None, :]
            assert np.all((r[:, None] < r[None, :])[less])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 4), st.integers(0, 2**32))
    def test_row_permutation_equivariance(self, n, m, seed):
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((n, m))
        perm = rng.permutation(n)
        assert_array_equal(column_ranks(S[perm]).data, column_ranks(S).data[perm])

    @pytest.mark.parametrize("f", [np.exp, np.tanh, lambda x: x ** 3 + x, lambda x: 5 - (-x)])
    def test_monotone_transform_invariance(self, f):
        S = np.random.default_rng(0).standard_normal((50, 3))
        T = S.copy()
        T[:, 1] = f(T[:, 1])
        assert_array_equal(column_ranks(T).data, column_ranks(S).data)


class TestQuantileIndex:
    @pytest.mark.parametrize("n, alpha, index, clamped", [
        (19, 0.05, 19, False),
        (10, 0.05, 10, True),
        (100000, 0.05, _ceil_div(100001 * 95, 100), False),
        (9, 0.7, 3, False),
    ])
    def test_examples(self, n, alpha, index, clamped):
        q = quantile_index(n, alpha)
        assert (q.index, q.clamped) == (index, clamped)

    def test_frozen_large_value(self):
        assert quantile_index(100000, 0.05).index == 95001

    @pytest.mark.parametrize("alpha", [0, 1, -0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            quantile_index(10, alpha)

    @given(st.integers(1, 10**6), st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.25, 0.5, 0.9]))
    def test_matches_exact_integer_formula(self, n, alpha):
        num = round(alpha * 100)
        raw = _ceil_div((n + 1) * (100 - num), 100)
        q = quantile_index(n, alpha)
        assert q.raw == raw
        assert q.index == min(raw, n)
        assert q.clamped == (raw > n)

    @given(st.integers(1, 5000), st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_monotone(self, n, a, b):
        lo, hi = sorted((a, b))
        assert quantile_index(n, lo).index >= quantile_index(n, hi).index
        assert quantile_index(n + 1, a).index >= quantile_index(n, a).index
