"""Max-rank correction and the closed-form baselines it is compared to.

All methods speak the same currency: a 1-based global rank ``t`` into the
ascending-sorted columns of the score matrix. The per-test threshold of
test ``k`` is the ``t``-th smallest score in column ``k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ranks import (
    QuantileIndex,
    RankMatrix,
    ScoreMatrix,
    _as_fraction,
    column_ranks,
    order_index,
    quantile_index,
)


class Method(str, enum.Enum):
    MAX_RANK = "max-rank"
    BONFERRONI = "bonferroni"
    INDEPENDENCE = "independence-exact"
    UNCORRECTED = "uncorrected"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"independence": cls.INDEPENDENCE, "maxrank": cls.MAX_RANK,
                   "bonf": cls.BONFERRONI, "none": cls.UNCORRECTED}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown correction {value!r}; choose from {choices}") from None


@dataclass(frozen=True)
class CorrectionResult:
    """Outcome of a correction.

    Attributes
    ----------
    method : Method
    global_rank : int
        Shared 1-based order-statistic index ``t`` in ``1..n``.
    per_test_quantiles : ndarray, shape (m,)
        ``t``-th smallest score of each column.
    per_test_alpha : ndarray, shape (m,)
        Implied per-test significance level.
    clamped : bool
        The requested index exceeded ``n`` and was clamped to it.
    n : int
        Number of null samples behind the result.
    """

    method: Method
    global_rank: int
    per_test_quantiles: np.ndarray
    per_test_alpha: np.ndarray
    clamped: bool
    n: int

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "global_rank": int(self.global_rank),
            "clamped": bool(self.clamped),
            "per_test": [
                {"quantile": float(q), "alpha": float(a)}
                for q, a in zip(self.per_test_quantiles, self.per_test_alpha)
            ],
        }


def _check_alpha(alpha) -> float:
    a = float(alpha)
    if not 0 < a < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return a


def _result(method, S: ScoreMatrix, idx: QuantileIndex, per_test_alpha, sorted_cols=None):
    if sorted_cols is None:
        sorted_cols = S.sorted_columns()
    quantiles = sorted_cols[idx.index - 1].copy()
    per_test_alpha = np.broadcast_to(np.asarray(per_test_alpha, float), (S.m,)).copy()
    return CorrectionResult(method, idx.index, quantiles, per_test_alpha, idx.clamped, S.n)


def max_rank_index(R: RankMatrix, alpha: float) -> QuantileIndex:
    """Global rank picked by max-rank from the row-wise maxima of ``R``."""
    idx = quantile_index(R.n, alpha)
    r_max = np.sort(R.row_max())
    return QuantileIndex(int(r_max[idx.index - 1]), idx.clamped, idx.raw)


def max_rank_correct(R: RankMatrix, S: ScoreMatrix, alpha: float,
                     sorted_cols: np.ndarray | None = None) -> CorrectionResult:
    """Max-rank FWER correction.

    Takes the maximum rank of each row of ``R``, sorts these row maxima and
    picks the one at position ``ceil((n + 1) * (1 - alpha))`` as the shared
    rank ``t``. Every test then uses its ``t``-th smallest score as threshold,
    at implied per-test level ``1 - t / n``.

    Parameters
    ----------
    R : RankMatrix
        Column-wise ranks of ``S``.
    S : ScoreMatrix
        The scores the thresholds are read from.
    alpha : float
        Target family-wise error rate in (0, 1).
    sorted_cols : ndarray, optional
        ``S`` sorted along axis 0, if the caller already has it.

    Examples
    --------
    >>> R = RankMatrix(np.array([[1, 2], [2, 1], [3, 4], [4, 3]]))
    >>> max_rank_correct(R, ScoreMatrix(R.data), 0.25).global_rank
    4
    """
    alpha = _check_alpha(alpha)
    if R.data.shape != S.data.shape:
        raise ValueError(f"rank matrix shape {R.data.shape} does not match "
                         f"score matrix shape {S.data.shape}")
    idx = max_rank_index(R, alpha)
    return _result(Method.MAX_RANK, S, idx, 1 - idx.index / S.n, sorted_cols)


def bonferroni_correct(S: ScoreMatrix, alpha: float,
                       sorted_cols: np.ndarray | None = None) -> CorrectionResult:
    """Bonferroni: every test at level ``alpha / m``."""
    alpha = _check_alpha(alpha)
    level = _as_fraction(alpha) / S.m
    idx = order_index(S.n, 1 - level)
    return _result(Method.BONFERRONI, S, idx, float(level), sorted_cols)


def independence_level(alpha: float, m: int) -> float:
    """Per-test level ``1 - (1 - alpha) ** (1 / m)`` that is exact under independence."""
    return float(-np.expm1(np.log1p(-alpha) / m))


def independence_exact_correct(S: ScoreMatrix, alpha: float,
                               sorted_cols: np.ndarray | None = None) -> CorrectionResult:
    """Per-test quantile probability ``(1 - alpha) ** (1 / m)``.

    This is the exact FWER-controlling level for independent tests, and the
    best max-rank can do when there is no dependence to exploit.
    """
    alpha = _check_alpha(alpha)
    if S.m == 1:
        coverage = 1 - _as_fraction(alpha)
        level = alpha
    else:
        q = (1 - alpha) ** (1 / S.m)
        coverage = Fraction(q)
        level = independence_level(alpha, S.m)
    idx = order_index(S.n, coverage)
    return _result(Method.INDEPENDENCE, S, idx, level, sorted_cols)


def uncorrected(S: ScoreMatrix, alpha: float,
                sorted_cols: np.ndarray | None = None) -> CorrectionResult:
    """No adjustment; each test at level ``alpha``."""
    alpha = _check_alpha(alpha)
    return _result(Method.UNCORRECTED, S, quantile_index(S.n, alpha), alpha, sorted_cols)


def correct(S, alpha: float, method="max-rank", seed: int = 0,
            R: RankMatrix | None = None) -> CorrectionResult:
    """Apply ``method`` to score matrix ``S``.

    ``seed`` only matters for max-rank on tied data, where it drives the
    jitter used to break ties.
    """
    if not isinstance(S, ScoreMatrix):
        S = ScoreMatrix(S)
    method = Method.parse(method)
    if method is Method.MAX_RANK:
        if R is None:
            R = column_ranks(S, seed)
        return max_rank_correct(R, S, alpha)
    if method is Method.BONFERRONI:
        return bonferroni_correct(S, alpha)
    if method is Method.INDEPENDENCE:
        return independence_exact_correct(S, alpha)
    return uncorrected(S, alpha)
