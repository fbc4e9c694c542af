"""Bayesian dynamic factor stochastic-volatility-in-mean VARs.

Estimation by MCMC, companion-form predictive distributions, expanding-window
backtesting, and forecast evaluation (relative CSFE/CLPL, Diebold-Mariano,
Model Confidence Set).
"""

from .data_io import (
    Panel,
    Quarter,
    TransformCode,
    WindowPlan,
    apply_transform,
    destandardize_panel,
    invert_transform,
    load_csv_panel,
    plan_expanding_windows,
    standardize_panel,
    transform_panel,
    write_csv_panel,
)
from .model import (
    InMean,
    LatentPaths,
    Leverage,
    LsvvarParams,
    ModelConfig,
    Params,
    PriorHyper,
    config_for,
    lambda_matrix,
    leverage_adjusted_moments,
    log_joint_density,
    simulate_model,
    volatility_matrices,
)
from .statespace import (
    FilterResult,
    LinearGaussianSS,
    SmootherDraw,
    dense_gaussian_oracle,
    kalman_filter,
    simulation_smoother_draw,
)
from .mcmc import (
    ChainConfig,
    DrawSet,
    estimate_ar_residual_variance,
    inefficiency_factor,
    minnesota_prior_covariance,
    posterior_summary,
    run_chain,
    run_lsvvar_chain,
)
from .forecast import (
    CompanionSystem,
    ForecastResult,
    build_companion,
    posterior_predictive,
    predictive_moments,
    run_backtest,
    simulate_volatility_path,
)
from .evaluation import (
    cumulative_series,
    dm_test,
    model_confidence_set,
    percentage_gain,
)

__version__ = "0.1.0"
