"""Conditional density estimation by classifying real against instrumental targets."""

from .boosting import BoostConfig, BoostedModel, fit_classifier, fit_regressor, log_loss, predict_proba
from .data import (
    Dataset,
    ScalingParams,
    SplitSpec,
    TargetGrid,
    apply_scaling,
    fit_scaling,
    load_csv,
    make_grid,
    split,
    subsample,
)
from .estimator import (
    AugmentedDataset,
    DensityCurve,
    InstrumentalDist,
    OcdeModel,
    build_augmented,
    density_on_grid,
    fit_instrumental,
    fit_ocde,
    raw_density,
    smooth_curve,
    tune_components,
)
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    ToyOracleEstimator,
    UniformEstimator,
    cde_loss,
    run_debiased,
    run_raw,
    toy_oracle_density,
)
from .harness import generate_toy
from .nnk import NnkModel, fit_nnk, nnk_density_on_grid, tune_nnk

__version__ = "0.1.0"
