"""Deterministic oracle and invariant checks, runnable without pytest.

Each check returns a :class:`Check`; ``run_all`` drives them and the
``selftest`` CLI command prints the table.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .conformal import CalibrationSet, conformal_p_value, multivariate_conformal, \
    split_conformal_fit
from .corrections import (
    bonferroni_correct,
    correct,
    independence_exact_correct,
    max_rank_correct,
)
from .ranks import RankMatrix, ScoreMatrix, column_ranks, quantile_index
from .simulation import _draw

ORACLE_ALPHAS = (0.1, 0.25, 0.5)


@dataclass
class Check:
    name: str
    cases: int
    failures: int
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _random_scores(rng, ties=False):
    n = int(rng.integers(2, 60))
    m = int(rng.integers(1, 7))
    S = rng.standard_normal((n, m))
    if ties:
        S = np.round(S * 2) / 2
    return S


# -- brute-force max-rank oracle ---------------------------------------------

def oracle_global_rank(R: np.ndarray, alpha: float) -> int:
    """Smallest t whose count of rows with every rank <= t reaches ceil((n+1)(1-alpha)).

    Counting is done straight from the rank matrix, without forming row maxima
    or sorting anything.
    """
    n = R.shape[0]
    need = math.ceil((n + 1) * (1 - alpha) - 1e-9)
    if need > n:
        return n
    for t in range(1, n + 1):
        covered = sum(1 for row in R if all(r <= t for r in row))
        if covered >= need:
            return t
    raise AssertionError("unreachable: t = n covers every row")


def _encode(sorted_rows: np.ndarray, n: int) -> np.ndarray:
    weights = (n + 1) ** np.arange(sorted_rows.shape[1], dtype=np.int64)
    return sorted_rows.astype(np.int64) @ weights


def rank_matrix_classes(n: int, m: int):
    """One rank matrix for every achievable multiset of row maxima.

    Max-rank and its oracle depend on ``R`` only through the multiset of row
    maxima, and that multiset is invariant under joint row permutations. So
    fixing column 1 to the identity and keeping one representative per
    multiset at each added column covers all ``(n!)^(m-1)`` matrices.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    perms = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64)
    reps = [np.arange(1, n + 1)[:, None]]
    for _ in range(m - 1):
        seen = {}
        for R in reps:
            v = R.max(axis=1)
            maxima = np.maximum(v[None, :], perms)
            keys = _encode(np.sort(maxima, axis=1), n)
            uniq, first = np.unique(keys, return_index=True)
            for key, i in zip(uniq.tolist(), first.tolist()):
                if key not in seen:
                    seen[key] = np.column_stack([R, perms[i]])
        reps = list(seen.values())
    return reps


def check_bruteforce_oracle(max_n: int = 8, max_m: int = 3) -> Check:
    cases = failures = 0
    bad = []
    for n in range(1, max_n + 1):
        for m in range(1, max_m + 1):
            for R in rank_matrix_classes(n, m):
                rm = RankMatrix(R)
                S = ScoreMatrix(R.astype(float))
                for alpha in ORACLE_ALPHAS:
                    cases += 1
                    got = max_rank_correct(rm, S, alpha).global_rank
                    want = oracle_global_rank(R, alpha)
                    if got != want:
                        failures += 1
                        if len(bad) < 3:
                            bad.append(f"n={n} m={m} alpha={alpha}: {got} != {want}")
    return Check("brute-force max-rank oracle (n<=8, m<=3)", cases, failures,
                 detail="; ".join(bad))


# -- rank invariants -----------------------------------------------------------

def check_rank_permutation(rng, reps=200) -> Check:
    fails = 0
    for _ in range(reps):
        S = _random_scores(rng)
        perm = rng.permutation(S.shape[0])
        if not np.array_equal(column_ranks(S[perm]).data, column_ranks(S).data[perm]):
            fails += 1
    return Check("rank row-permutation equivariance", reps, fails)


def check_rank_monotone(rng, reps=200) -> Check:
    transforms = (np.exp, lambda x: x ** 3, lambda x: 3 * x - 7, np.arctan)
    fails = 0
    for _ in range(reps):
        S = _random_scores(rng)
        R = column_ranks(S).data
        k = int(rng.integers(S.shape[1]))
        f = transforms[int(rng.integers(len(transforms)))]
        T = S.copy()
        T[:, k] = f(T[:, k])
        if not np.array_equal(column_ranks(T).data[:, k], R[:, k]):
            fails += 1
    return Check("rank monotone-transform invariance", reps, fails)


def check_rank_columns(rng, reps=200) -> Check:
    fails = 0
    for i in range(reps):
        S = _random_scores(rng, ties=bool(i % 2))
        R = column_ranks(S, seed=i).data
        n = S.shape[0]
        ok = np.all(R.sum(axis=0) == n * (n + 1) // 2)
        ok &= np.array_equal(np.sort(R, axis=0), np.repeat(np.arange(1, n + 1)[:, None],
                                                             R.shape[1], axis=1))
        # distinct entries keep their order through the jitter
        for k in range(S.shape[1]):
            s, r = S[:, k], R[:, k]
            less = s[:, None] < s[None, :]
            ok &= bool(np.all((r[:, None] < r[None, :])[less]))
        fails += not ok
    return Check("rank columns are order-preserving permutations", reps, fails)


def check_quantile_index_monotone() -> Check:
    fails = cases = 0
    alphas = [0.01, 0.05, 0.1, 0.25, 0.5, 0.9]
    for a in alphas:
        prev = 0
        for n in range(1, 400):
            cases += 1
            idx = quantile_index(n, a).index
            fails += idx < prev
            prev = idx
    for n in range(1, 400):
        prev = n + 1
        for a in alphas:
            cases += 1
            idx = quantile_index(n, a).index
            fails += idx > prev
            prev = idx
    return Check("quantile_index monotone in n and alpha", cases, fails)


# -- correction invariants -----------------------------------------------------

def check_rmax_dominance(rng, reps=200) -> Check:
    fails = 0
    for _ in range(reps):
        R = column_ranks(_random_scores(rng)).data
        fails += not np.all(R.max(axis=1)[:, None] >= R)
    return Check("row maxima dominate every rank column", reps, fails)


def check_index_ordering(rng, reps=1000) -> Check:
    """global_rank(max-rank) <= index(independence) <= index(bonferroni).

    The baseline ordering and max-rank <= bonferroni hold for every matrix and
    are checked on independent and dependent draws alike. Max-rank below the
    independence index is a population statement; it is checked on draws with
    equicorrelation of at least 0.5.
    """
    fails = 0
    bad = []
    for i in range(reps):
        n = int(rng.integers(20, 1001))
        m = int(rng.integers(1, 11))
        alpha = float(rng.choice([0.01, 0.05, 0.1, 0.25]))
        rho = float(rng.uniform(0, 1))
        S = ScoreMatrix(_draw(rho, m, n, rng))
        mr = correct(S, alpha, "max-rank").global_rank
        ind = independence_exact_correct(S, alpha).global_rank
        bon = bonferroni_correct(S, alpha).global_rank
        ok = mr <= bon and ind <= bon
        if rho >= 0.5:
            ok &= mr <= ind
        # a second draw with rho in [0.5, 1] gets the full chain checked every time
        S2 = ScoreMatrix(_draw(0.5 + rho / 2, m, n, rng))
        mr2 = correct(S2, alpha, "max-rank").global_rank
        ok &= mr2 <= independence_exact_correct(S2, alpha).global_rank
        if not ok:
            fails += 1
            if len(bad) < 3:
                bad.append(f"case {i}: n={n} m={m} rho={rho:.3f} ({mr}, {ind}, {bon})")
    return Check("integer ordering max-rank <= independence <= bonferroni", reps, fails,
                 detail="; ".join(bad))


def check_correction_row_permutation(rng, reps=200) -> Check:
    fails = 0
    for _ in range(reps):
        S = _random_scores(rng)
        perm = rng.permutation(S.shape[0])
        for method in ("max-rank", "bonferroni", "independence", "uncorrected"):
            a, b = correct(S, 0.1, method), correct(S[perm], 0.1, method)
            fails += not (a.global_rank == b.global_rank
                          and np.array_equal(a.per_test_quantiles, b.per_test_quantiles))
    return Check("corrections invariant to row permutation", reps * 4, fails)


def check_correction_monotone(rng, reps=200) -> Check:
    fails = 0
    for _ in range(reps):
        S = _random_scores(rng)
        T = np.exp(S)
        for method in ("max-rank", "bonferroni", "independence"):
            a, b = correct(S, 0.1, method), correct(T, 0.1, method)
            fails += not (a.global_rank == b.global_rank
                          and np.array_equal(a.per_test_alpha, b.per_test_alpha)
                          and np.array_equal(np.exp(a.per_test_quantiles), b.per_test_quantiles))
    return Check("corrections equivariant under monotone transforms", reps * 3, fails)


# -- conformal invariants ------------------------------------------------------

def check_superset(rng, reps=300) -> Check:
    fails = 0
    for _ in range(reps):
        S = np.abs(_random_scores(rng))
        alpha = float(rng.choice([0.05, 0.1, 0.25]))
        joint = multivariate_conformal(CalibrationSet(S), alpha, "max-rank")
        for k in range(S.shape[1]):
            single = split_conformal_fit(S[:, [k]], alpha)
            fails += not joint.thresholds[k] >= single.thresholds[0]
    return Check("max-rank set contains each per-dimension set", reps, fails)


def check_calibration_permutation(rng, reps=200) -> Check:
    fails = 0
    for _ in range(reps):
        cal = CalibrationSet(np.abs(_random_scores(rng)))
        perm = rng.permutation(cal.n)
        for method in ("max-rank", "bonferroni"):
            a = multivariate_conformal(cal, 0.1, method)
            b = multivariate_conformal(cal.permuted(perm), 0.1, method)
            fails += not np.array_equal(a.thresholds, b.thresholds)
    return Check("conformal thresholds invariant to calibration order", reps * 2, fails)


def check_equivalence_of_events(rng, reps=100) -> Check:
    fails = cases = 0
    for _ in range(reps):
        n = int(rng.integers(1, 80))
        cal = np.abs(rng.standard_normal(n))
        alpha = float(rng.choice([0.05, 0.1, 0.2, 0.5]))
        ps = split_conformal_fit(cal, alpha)
        grid = np.concatenate([np.linspace(0, cal.max() * 1.5, 97), cal])
        for s in grid:
            cases += 1
            by_threshold = s <= ps.thresholds[0]
            by_pvalue = conformal_p_value(s, cal) > ps.effective_alpha[0]
            fails += by_threshold != by_pvalue
    return Check("set membership by threshold equals membership by p-value", cases, fails)


def run_all(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    checks = [
        lambda: check_rank_permutation(rng),
        lambda: check_rank_monotone(rng),
        lambda: check_rank_columns(rng),
        check_quantile_index_monotone,
        lambda: check_rmax_dominance(rng),
        lambda: check_index_ordering(rng),
        lambda: check_correction_row_permutation(rng),
        lambda: check_correction_monotone(rng),
        check_bruteforce_oracle,
        lambda: check_superset(rng),
        lambda: check_calibration_permutation(rng),
        lambda: check_equivalence_of_events(rng),
    ]
    out = []
    for fn in checks:
        t0 = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out


def format_report(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'cases':>8}  {'fail':>5}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.cases:>8}  {r.failures:>5}  "
                     f"{'PASS' if r.passed else 'FAIL'}" + (f"  ({r.detail})" if r.detail else ""))
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return "\n".join(lines)
