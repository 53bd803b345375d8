"""Split conformal prediction with per-dimension thresholds from a correction.

Scores are absolute residuals, so a prediction set is a box: dimension k is
the interval ``prediction_k +/- threshold_k``. Running one conformal test per
output dimension is a multiple testing problem; the joint box only keeps
``1 - alpha`` coverage if the thresholds come from an FWER correction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import partial
from typing import Sequence

import numpy as np

from . import streams
from ._parallel import ordered_map
from .corrections import Method, correct
from .ranks import ScoreMatrix, quantile_index
from .simulation import _draw

log = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "correction", "joint_coverage", "per_dim_coverage", "mean_volume", "clamped_any",
    "joint_stderr", "trials", "failed_trials",
]


class CalibrationSet:
    """Nonconformity scores on the calibration split, one column per output."""

    def __init__(self, scores):
        self.scores = ScoreMatrix(scores)

    @property
    def n(self) -> int:
        return self.scores.n

    @property
    def m(self) -> int:
        return self.scores.m

    def permuted(self, perm) -> "CalibrationSet":
        return CalibrationSet(self.scores.data[np.asarray(perm)])


@dataclass(frozen=True)
class PredictionSet:
    """Per-dimension score thresholds; an infinite threshold admits every value.

    ``effective_alpha[k]`` is the p-value cut that reproduces the threshold
    test exactly: a candidate is in the set iff its conformal p-value is
    strictly above it.
    """

    thresholds: np.ndarray
    effective_alpha: np.ndarray
    global_rank: int
    clamped: bool
    method: Method

    @property
    def m(self) -> int:
        return len(self.thresholds)

    def interval(self, prediction) -> tuple:
        pred = np.asarray(prediction, dtype=float)
        return pred - self.thresholds, pred + self.thresholds

    def contains_scores(self, scores) -> np.ndarray:
        return np.asarray(scores) <= self.thresholds

    def contains(self, prediction, y) -> np.ndarray:
        return self.contains_scores(np.abs(np.asarray(y, float) - np.asarray(prediction, float)))

    def volume(self) -> float:
        return float(np.prod(2 * self.thresholds))


def conformal_p_value(s_new: float, cal: Sequence[float]) -> float:
    """Share of calibration scores at least as large as ``s_new``, over ``n + 1``.

    The test point itself is not counted in the numerator, so a score larger
    than every calibration score gets p-value 0.
    """
    cal = np.asarray(cal, dtype=float)
    if cal.size == 0:
        raise ValueError("calibration scores must be non-empty")
    return np.count_nonzero(cal >= s_new) / (cal.size + 1)


def _prediction_set(sorted_scores: np.ndarray, rank: int, clamped: bool,
                    method: Method) -> PredictionSet:
    n, m = sorted_scores.shape
    if clamped:
        thresholds = np.full(m, np.inf)
        rank_cut = n + 1
    else:
        thresholds = sorted_scores[rank - 1].copy()
        rank_cut = rank
    eff = np.full(m, (n - rank_cut) / (n + 1))
    return PredictionSet(thresholds, eff, rank, clamped, method)


def split_conformal_fit(cal, alpha: float) -> PredictionSet:
    """Single-output split conformal threshold.

    The threshold is the ``ceil((n + 1)(1 - alpha))``-th smallest calibration
    score. If that index exceeds ``n`` the set is the whole output space.
    """
    scores = np.asarray(cal.scores.data if isinstance(cal, CalibrationSet) else cal, float)
    scores = scores.reshape(len(scores), -1)
    if scores.shape[1] != 1:
        raise ValueError("split_conformal_fit takes a single dimension; "
                         "use multivariate_conformal for several")
    idx = quantile_index(len(scores), alpha)
    return _prediction_set(np.sort(scores, axis=0), idx.index, idx.clamped,
                           Method.UNCORRECTED)


def multivariate_conformal(cal: CalibrationSet, alpha: float, correction="max-rank",
                           seed: int = 0) -> PredictionSet:
    """Joint prediction box with thresholds from ``correction``."""
    if not isinstance(cal, CalibrationSet):
        cal = CalibrationSet(cal)
    res = correct(cal.scores, alpha, correction, seed=seed)
    return _prediction_set(cal.scores.sorted_columns(), res.global_rank, res.clamped,
                           res.method)


@dataclass(frozen=True)
class SyntheticTask:
    """Multi-output linear regression with correlated noise.

    ``y_k = slope_k * x + noise_scale * e_k`` where ``x`` is a standard normal
    feature and ``e`` is equicorrelated Gaussian noise with correlation
    ``latent_weight``. Larger weights make the residual scores of different
    outputs move together.
    """

    m: int = 10
    latent_weight: float = 0.9
    noise_scale: float = 1.0
    n_train: int = 200
    n_cal: int = 2000
    n_test: int = 500

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 0 <= self.latent_weight <= 1:
            raise ValueError(f"latent_weight must lie in [0, 1], got {self.latent_weight}")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")
        if min(self.n_train, self.n_cal, self.n_test) < 2:
            raise ValueError("n_train, n_cal and n_test must each be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTask":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown task keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def slopes(self) -> np.ndarray:
        return 1 + np.arange(self.m) / self.m

    def sample(self, rows: int, rng: np.random.Generator) -> tuple:
        x = rng.standard_normal(rows)
        noise = _draw(self.latent_weight, self.m, rows, rng)
        return x, x[:, None] * self.slopes + self.noise_scale * noise


def fit_least_squares(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Intercept and slope per output, shape (2, m)."""
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def predict(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return coef[0] + x[:, None] * coef[1]


def _trial(task: SyntheticTask, alpha: float, corrections, child) -> dict:
    rng = streams.generator(child)
    jitter_seed = streams.child_seed(rng)
    x_tr, y_tr = task.sample(task.n_train, rng)
    x_cal, y_cal = task.sample(task.n_cal, rng)
    x_te, y_te = task.sample(task.n_test, rng)
    coef = fit_least_squares(x_tr, y_tr)
    cal = CalibrationSet(np.abs(y_cal - predict(coef, x_cal)))
    test_scores = np.abs(y_te - predict(coef, x_te))
    out = {}
    for mt in corrections:
        ps = multivariate_conformal(cal, alpha, mt, seed=jitter_seed)
        covered = ps.contains_scores(test_scores)
        out[mt] = (covered.all(axis=1).mean(), covered.mean(axis=0), ps.volume(), ps.clamped)
    return out


def _trial_safe(child, task, alpha, corrections):
    try:
        return _trial(task, alpha, corrections, child)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("conformal trial failed: %s", exc)
        return None


def coverage_experiment(task: SyntheticTask, alpha: float = 0.1,
                        corrections: Sequence = ("max-rank", "bonferroni", "uncorrected"),
                        trials: int = 100, seed: int = 0, threads: int | None = 1) -> list:
    """Joint and per-dimension coverage of each correction over repeated splits.

    Every trial draws fresh train, calibration and test splits; all
    corrections are evaluated on the same splits. ``joint_stderr`` is the
    standard error of the per-trial joint coverage across trials.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    corrections = [Method.parse(c) for c in corrections]
    children = streams.seed_sequence(seed).spawn(trials)
    results = ordered_map(
        partial(_trial_safe, task=task, alpha=alpha, corrections=corrections),
        children, threads)
    ok = [r for r in results if r is not None]
    failed = len(results) - len(ok)

    rows = []
    for mt in corrections:
        row = {"correction": mt.value, "trials": trials, "failed_trials": failed}
        if ok:
            joint = np.array([r[mt][0] for r in ok])
            per_dim = np.mean([r[mt][1] for r in ok], axis=0)
            row.update(
                joint_coverage=float(joint.mean()),
                per_dim_coverage=tuple(float(v) for v in per_dim),
                mean_volume=float(np.mean([r[mt][2] for r in ok])),
                clamped_any=any(r[mt][3] for r in ok),
                joint_stderr=float(joint.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1
                else float("nan"),
            )
        rows.append(row)
    return rows
