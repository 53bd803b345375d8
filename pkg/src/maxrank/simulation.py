"""Monte Carlo FWER study on equicorrelated Gaussian nulls.

Each trial draws an n x m calibration matrix, runs a correction on it and
then checks ``fresh_draws`` new null vectors against the resulting per-test
thresholds. A fresh vector is a family-wise error if any component exceeds
its threshold.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import asdict, dataclass
from functools import partial
from typing import Iterable, Sequence

import numpy as np

from . import streams
from ._parallel import ordered_map
from .corrections import (
    Method,
    bonferroni_correct,
    independence_exact_correct,
    max_rank_correct,
    uncorrected,
)
from .ranks import ScoreMatrix, ranks_and_sorted

log = logging.getLogger(__name__)

DEFAULT_METHODS = (Method.MAX_RANK, Method.BONFERRONI)

TABLE_COLUMNS = [
    "method", "rho", "m", "n", "alpha", "alpha_hat", "mc_stderr", "clamped",
    "per_test_alpha_hat", "global_rank_mean", "trials", "fresh_draws", "seed", "error",
]


@dataclass(frozen=True)
class SimConfig:
    rho: float
    m: int
    n: int
    alpha: float = 0.05
    trials: int = 100
    fresh_draws: int = 1000
    seed: int = 0
    allow_negative: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.m < 1 or self.n < 1:
            raise ValueError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if self.trials < 1 or self.fresh_draws < 1:
            raise ValueError("trials and fresh_draws must be >= 1")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        _check_rho(self.rho, self.m, self.allow_negative)


@dataclass(frozen=True)
class FwerEstimate:
    """Monte Carlo estimate of the family-wise error rate of one method.

    ``mc_stderr`` is the binomial standard error of ``alpha_hat`` over all
    ``trials * fresh_draws`` evaluated vectors. ``clamped`` is set when any
    trial's order-statistic index had to be clamped to ``n``.
    """

    method: Method
    config: SimConfig
    alpha_hat: float
    per_test_alpha_hat: tuple
    mc_stderr: float
    clamped: bool
    clamped_trials: int
    global_rank_mean: float

    def per_test_stderr(self) -> np.ndarray:
        p = np.asarray(self.per_test_alpha_hat)
        return np.sqrt(p * (1 - p) / (self.config.trials * self.config.fresh_draws))


def _check_rho(rho: float, m: int, allow_negative: bool) -> None:
    if not math.isfinite(rho) or rho > 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho < 0:
        if not allow_negative:
            raise ValueError(f"rho must lie in [0, 1], got {rho} "
                             "(negative correlation needs allow_negative)")
        if m > 1 and rho < -1 / (m - 1) - 1e-12:
            raise ValueError(f"rho={rho} gives a covariance that is not positive "
                             f"semidefinite for m={m} (need rho >= {-1 / (m - 1):.6g})")


def _negative_factor(rho: float, m: int) -> np.ndarray:
    cov = np.full((m, m), rho) + (1 - rho) * np.eye(m)
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-10:
        raise ValueError(f"equicorrelation matrix with rho={rho}, m={m} is not PSD")
    return v * np.sqrt(np.clip(w, 0, None))


def _draw(rho: float, m: int, rows: int, rng: np.random.Generator,
          factor: np.ndarray | None = None) -> np.ndarray:
    if factor is not None:
        return rng.standard_normal((rows, m)) @ factor.T
    shared = rng.standard_normal((rows, 1))
    own = rng.standard_normal((rows, m))
    if rho == 1:
        return np.repeat(shared, m, axis=1)
    if rho == 0:
        return own
    return math.sqrt(rho) * shared + math.sqrt(1 - rho) * own


def sample_equicorrelated(rho: float, m: int, rows: int, rng: np.random.Generator,
                          allow_negative: bool = False) -> ScoreMatrix:
    """Draw ``rows`` vectors from N(0, rho * 11' + (1 - rho) * I).

    For rho in [0, 1] each component is ``sqrt(rho) * Z0 + sqrt(1 - rho) * Zk``
    with one shared factor per row. Negative rho is only accepted with
    ``allow_negative`` and goes through an eigendecomposition of the
    covariance.
    """
    _check_rho(rho, m, allow_negative)
    factor = _negative_factor(rho, m) if rho < 0 else None
    return ScoreMatrix(_draw(rho, m, rows, rng, factor))


def _threshold(method: Method, S: ScoreMatrix, sorted_cols, alpha, R):
    if method is Method.MAX_RANK:
        return max_rank_correct(R, S, alpha, sorted_cols)
    if method is Method.BONFERRONI:
        return bonferroni_correct(S, alpha, sorted_cols)
    if method is Method.INDEPENDENCE:
        return independence_exact_correct(S, alpha, sorted_cols)
    return uncorrected(S, alpha, sorted_cols)


def simulate_cell(config: SimConfig, methods: Sequence = DEFAULT_METHODS) -> dict:
    """Estimate the FWER of several methods on shared draws.

    All methods see the same calibration and fresh draws in every trial, and
    the draws depend only on ``(seed, rho, m, n)``, so the estimate of a method
    does not change with which other methods are requested.
    """
    methods = [Method.parse(mt) for mt in methods]
    c = config
    factor = _negative_factor(c.rho, c.m) if c.rho < 0 else None
    root = streams.seed_sequence(c.seed, streams.float_key(c.rho), c.m, c.n)

    total = {mt: 0 for mt in methods}
    per_test = {mt: np.zeros(c.m, dtype=np.int64) for mt in methods}
    clamped = {mt: 0 for mt in methods}
    ranks = {mt: 0 for mt in methods}

    for child in root.spawn(c.trials):
        rng = streams.generator(child)
        jitter_seed = streams.child_seed(rng)
        S = ScoreMatrix(_draw(c.rho, c.m, c.n, rng, factor))
        X = _draw(c.rho, c.m, c.fresh_draws, rng, factor)
        if Method.MAX_RANK in methods:
            R, sorted_cols = ranks_and_sorted(S, jitter_seed)
        else:
            R, sorted_cols = None, S.sorted_columns()
        for mt in methods:
            res = _threshold(mt, S, sorted_cols, c.alpha, R)
            exceed = X > res.per_test_quantiles
            total[mt] += int(np.count_nonzero(exceed.any(axis=1)))
            per_test[mt] += np.count_nonzero(exceed, axis=0)
            clamped[mt] += int(res.clamped)
            ranks[mt] += res.global_rank

    draws = c.trials * c.fresh_draws
    out = {}
    for mt in methods:
        a = total[mt] / draws
        out[mt] = FwerEstimate(
            method=mt,
            config=c,
            alpha_hat=a,
            per_test_alpha_hat=tuple(float(v) for v in per_test[mt] / draws),
            mc_stderr=math.sqrt(a * (1 - a) / draws),
            clamped=clamped[mt] > 0,
            clamped_trials=clamped[mt],
            global_rank_mean=ranks[mt] / c.trials,
        )
    return out


def estimate_fwer(config: SimConfig, method="max-rank") -> FwerEstimate:
    method = Method.parse(method)
    return simulate_cell(config, [method])[method]


@dataclass(frozen=True)
class ExperimentGrid:
    """Cartesian grid of simulation cells sharing alpha, trial counts and seed."""

    rho_list: tuple = ()
    m_list: tuple = ()
    n_list: tuple = ()
    methods: tuple = DEFAULT_METHODS
    alpha: float = 0.05
    trials: int = 100
    fresh_draws: int = 1000
    seed: int = 0
    allow_negative: bool = False

    def __post_init__(self):
        for name in ("rho_list", "m_list", "n_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "methods", tuple(Method.parse(mt) for mt in self.methods))
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.trials < 1 or self.fresh_draws < 1:
            raise ValueError("trials and fresh_draws must be >= 1")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentGrid":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for key in ("rho_list", "m_list", "n_list", "methods"):
            if key in kw and not isinstance(kw[key], (list, tuple)):
                kw[key] = [kw[key]]
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [mt.value for mt in self.methods]
        for key in ("rho_list", "m_list", "n_list"):
            d[key] = list(d[key])
        return d

    def cells(self) -> list:
        return list(itertools.product(self.rho_list, self.m_list, self.n_list))


def _row(est: FwerEstimate | None, method: Method, cfg: dict, error: str = "") -> dict:
    row = {
        "method": method.value,
        "rho": cfg["rho"], "m": cfg["m"], "n": cfg["n"], "alpha": cfg["alpha"],
        "trials": cfg["trials"], "fresh_draws": cfg["fresh_draws"], "seed": cfg["seed"],
        "error": error,
    }
    if est is None:
        row.update(alpha_hat=None, mc_stderr=None, clamped=None,
                   per_test_alpha_hat=(), global_rank_mean=None)
    else:
        row.update(alpha_hat=est.alpha_hat, mc_stderr=est.mc_stderr, clamped=est.clamped,
                   per_test_alpha_hat=est.per_test_alpha_hat,
                   global_rank_mean=est.global_rank_mean)
    return row


def _run_cell(cell, grid: ExperimentGrid) -> list:
    rho, m, n = cell
    cfg = dict(rho=rho, m=m, n=n, alpha=grid.alpha, trials=grid.trials,
               fresh_draws=grid.fresh_draws, seed=grid.seed)
    try:
        config = SimConfig(allow_negative=grid.allow_negative, **cfg)
        res = simulate_cell(config, grid.methods)
    except (ValueError, ArithmeticError, MemoryError) as exc:
        log.warning("cell rho=%s m=%s n=%s failed: %s", rho, m, n, exc)
        return [_row(None, mt, cfg, f"{type(exc).__name__}: {exc}") for mt in grid.methods]
    log.info("cell rho=%s m=%s n=%s: %s", rho, m, n,
             ", ".join(f"{mt.value}={res[mt].alpha_hat:.5f}" for mt in grid.methods))
    return [_row(res[mt], mt, cfg) for mt in grid.methods]


def run_grid(grid: ExperimentGrid, threads: int | None = 1) -> list:
    """One result row per (cell, method), in grid order.

    Each cell draws from its own substream, so the table is the same
    whether cells run serially or across ``threads`` worker processes.
    """
    per_cell = ordered_map(partial(_run_cell, grid=grid), grid.cells(), threads)
    return [row for rows in per_cell for row in rows]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(float(x)) for x in v)
    return str(v)


def format_table(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(col)) for col in columns])
    return buf.getvalue()


def write_table(rows: Iterable[dict], path, columns: Sequence[str] = TABLE_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_table(rows, columns))


def read_table(path) -> list:
    """Parse a simulation CSV back into typed rows."""
    out = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in ("rho", "alpha", "alpha_hat", "mc_stderr", "global_rank_mean"):
                row[key] = float(raw[key]) if raw.get(key) else None
            for key in ("m", "n", "trials", "fresh_draws", "seed"):
                row[key] = int(raw[key]) if raw.get(key) else None
            row["clamped"] = {"true": True, "false": False}.get(raw.get("clamped", ""))
            pt = raw.get("per_test_alpha_hat", "")
            row["per_test_alpha_hat"] = tuple(float(x) for x in pt.split(";")) if pt else ()
            out.append(row)
    return out
