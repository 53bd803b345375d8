"""Rank computation, tie breaking and order-statistic indexing.

Everything downstream works in the rank domain: scores are turned into
1-based column-wise ranks, and thresholds are picked by an integer
order-statistic index ``ceil((n + 1) * coverage)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

Number = Union[float, Fraction]


class TieError(ValueError):
    """Raised when a rank is requested from a pool containing duplicates."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScoreMatrix:
    """n x m matrix of test statistics; column k is the empirical null of test k."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2:
            raise ValueError(f"score matrix must be 2-d, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"score matrix needs n >= 1 and m >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("score matrix contains non-finite entries")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def sorted_columns(self) -> np.ndarray:
        return np.sort(self.data, axis=0)

    @classmethod
    def from_csv(cls, path) -> "ScoreMatrix":
        """Read a ``test_1,...,test_m`` headed CSV of decimal literals."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty file") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise ValueError(
                        f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ValueError(f"{path}: no data rows")
        return cls(np.array(rows, dtype=np.float64))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"test_{k + 1}" for k in range(self.m)])
            for row in self.data:
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class RankMatrix:
    """Column-wise 1-based ranks of a :class:`ScoreMatrix`.

    ``tied`` marks columns whose ties had to be broken; ``degenerate`` marks
    columns that were constant, where ties fall back to row order.
    """

    data: np.ndarray
    tied: np.ndarray = field(default=None)
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValueError(f"rank matrix must be 2-d, got shape {a.shape}")
        n, m = a.shape
        expected = np.arange(1, n + 1)
        if not np.array_equal(np.sort(a, axis=0), np.broadcast_to(expected[:, None], a.shape)):
            raise ValueError("each rank column must be a permutation of 1..n")
        object.__setattr__(self, "data", _readonly(a.astype(np.int64)))
        for name in ("tied", "degenerate"):
            flags = getattr(self, name)
            flags = np.zeros(m, dtype=bool) if flags is None else np.asarray(flags, bool)
            object.__setattr__(self, name, _readonly(flags))

    @classmethod
    def _trusted(cls, data, tied, degenerate) -> "RankMatrix":
        # skips the permutation check for ranks built by column_ranks
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _readonly(data))
        object.__setattr__(obj, "tied", _readonly(tied))
        object.__setattr__(obj, "degenerate", _readonly(degenerate))
        return obj

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def row_max(self) -> np.ndarray:
        return self.data.max(axis=1)


@dataclass(frozen=True)
class QuantileIndex:
    """1-based order-statistic index, clamped to n.

    ``raw`` keeps the unclamped ``ceil((n + 1) * coverage)`` so callers can
    tell how far past the sample the request went.
    """

    index: int
    clamped: bool
    raw: int


def rank_of(x: float, pool: Sequence[float]) -> int:
    """Number of pool elements less than or equal to ``x``."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.size == 0:
        raise ValueError("pool must be non-empty")
    if not np.all(np.isfinite(pool)) or not math.isfinite(x):
        raise ValueError("rank_of requires finite values")
    if np.unique(pool).size != pool.size:
        raise TieError("pool contains duplicate values; break ties before ranking")
    if not np.any(pool == x):
        raise ValueError(f"{x!r} is not an element of the pool")
    return int(np.count_nonzero(pool <= x))


def _as_fraction(v: Number) -> Fraction:
    if isinstance(v, Fraction):
        return v
    # repr gives the shortest decimal that round-trips, so 0.95 stays 19/20
    return Fraction(repr(float(v)))


def order_index(n: int, coverage: Number) -> QuantileIndex:
    """Index ``ceil((n + 1) * coverage)`` clamped into ``1..n``.

    ``coverage`` may be a float or an exact :class:`~fractions.Fraction`;
    floats are read through their shortest decimal form so that levels such
    as 0.95 land on exact integers instead of one past them.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    raw = math.ceil((n + 1) * _as_fraction(coverage))
    raw = max(raw, 1)
    return QuantileIndex(index=min(raw, n), clamped=raw > n, raw=raw)


def quantile_index(n: int, alpha: Number) -> QuantileIndex:
    """Order-statistic index of the conformal ``1 - alpha`` quantile."""
    a = _as_fraction(alpha)
    if not 0 < a < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return order_index(n, 1 - a)


def _jitter_base(seed: int, n: int) -> np.ndarray:
    # depends on (seed, row) only so identical columns get identical jitter
    return np.random.Generator(np.random.Philox(seed)).random(n)


def column_ranks(S: ScoreMatrix, seed: int = 0) -> RankMatrix:
    """Column-wise ranks of ``S``, with seeded jitter for ties.

    Tied entries of column ``k`` receive ``u_i * g_k / 2`` where ``u_i`` in
    [0, 1) is drawn once per row from ``seed`` and ``g_k`` is the smallest
    nonzero gap in the column, so strict orderings survive untouched. A
    constant column has no gap; its ranks follow row order and the column is
    flagged as degenerate.
    """
    return ranks_and_sorted(S, seed)[0]


def ranks_and_sorted(S: ScoreMatrix, seed: int = 0) -> tuple:
    """:func:`column_ranks` plus ``S`` sorted along axis 0, from a single argsort."""
    if not isinstance(S, ScoreMatrix):
        S = ScoreMatrix(S)
    data = S.data
    n, m = data.shape
    # row-major (m, n) layout keeps every per-column sort contiguous
    cols = np.ascontiguousarray(data.T)
    order = np.argsort(cols, axis=1)
    sorted_cols = np.take_along_axis(cols, order, axis=1)
    tied = np.zeros(m, dtype=bool)
    if n > 1:
        tied = np.any(sorted_cols[:, 1:] == sorted_cols[:, :-1], axis=1)
    degenerate = np.zeros(m, dtype=bool)

    if tied.any():
        u = _jitter_base(seed, n)
        for k in np.flatnonzero(tied):
            gaps = np.diff(sorted_cols[k])
            positive = gaps[gaps > 0]
            if positive.size == 0:
                degenerate[k] = True
                order[k] = np.arange(n)
                continue
            col = cols[k] + u * (positive.min() / 2)
            # jitter below float resolution can still collide; u decides then
            order[k] = np.lexsort((u, col))

    ranks = np.empty((m, n), dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(1, n + 1)[None, :], axis=1)
    ranks, sorted_cols = ranks.T, sorted_cols.T
    return RankMatrix._trusted(ranks, tied, degenerate), sorted_cols
