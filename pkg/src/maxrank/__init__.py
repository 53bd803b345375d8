"""FWER control for positively dependent tests via max-rank."""

from .conformal import (
    CalibrationSet,
    PredictionSet,
    SyntheticTask,
    conformal_p_value,
    coverage_experiment,
    multivariate_conformal,
    split_conformal_fit,
)
from .corrections import (
    CorrectionResult,
    Method,
    bonferroni_correct,
    correct,
    independence_exact_correct,
    max_rank_correct,
    uncorrected,
)
from .ranks import (
    QuantileIndex,
    RankMatrix,
    ScoreMatrix,
    TieError,
    column_ranks,
    quantile_index,
    rank_of,
)
from .simulation import (
    ExperimentGrid,
    FwerEstimate,
    SimConfig,
    estimate_fwer,
    run_grid,
    sample_equicorrelated,
)

__version__ = "0.1.0"
