"""
双幂律采样比例工具 - 核心计算模块
"""

from .dpl_model import (
    DplParams, DirectionSpec, Preset, CriticalPointReport, CurvePrediction,
    eval_dpl, dpl_derivative, dpl_second_derivative, overfit_coefficient, overfit_threshold,
    analyze_critical_point, critical_point, data_shares, temperature_weights, predict_curve, missing_biases
)
from .fitting import (
    Observation, FitOptions, FitReport, NllsResult,
    nlls_solve, fit_capacity, fit_overfit_shape, fit_overfit_scale, fit_data_scaling,
    fit_full, fit_bias, refit_biases, goodness_of_fit, r_squared, group_series, generate_observations
)
from .pareto import LossVector, SweepPoint, CollapseReport, dominates, pareto_front, detect_collapse
from .ratio_optimizer import (
    MetricWeights, RatioSolution, objective, optimize_ratios, grid_oracle, temperature_baseline
)
from .simulator import (
    SimConfig, TaskSpec, SweepResult, train_once, run_sweep, sharpness,
    imbalanced_config, balanced_config
)
from .exceptions import (
    DplError,
    ParameterError,
    DomainError,
    MissingBiasError,
    DimensionMismatchError,
    InsufficientDataError,
    IdentifiabilityError,
    DivergenceError,
    UndefinedStatisticError,
    InfeasibleFloorError,
    BudgetExceededError,
    PresetNotFoundError,
    ConfigError,
    DataReadError,
    DataFormatError,
    SaveError
)

__all__ = [
    'DplParams', 'DirectionSpec', 'Preset', 'CriticalPointReport', 'CurvePrediction',
    'eval_dpl', 'dpl_derivative', 'dpl_second_derivative', 'overfit_coefficient', 'overfit_threshold',
    'analyze_critical_point', 'critical_point', 'data_shares', 'temperature_weights', 'predict_curve',
    'missing_biases',
    'Observation', 'FitOptions', 'FitReport', 'NllsResult',
    'nlls_solve', 'fit_capacity', 'fit_overfit_shape', 'fit_overfit_scale', 'fit_data_scaling',
    'fit_full', 'fit_bias', 'refit_biases', 'goodness_of_fit', 'r_squared', 'group_series',
    'generate_observations',
    'LossVector', 'SweepPoint', 'CollapseReport', 'dominates', 'pareto_front', 'detect_collapse',
    'MetricWeights', 'RatioSolution', 'objective', 'optimize_ratios', 'grid_oracle', 'temperature_baseline',
    'SimConfig', 'TaskSpec', 'SweepResult', 'train_once', 'run_sweep', 'sharpness',
    'imbalanced_config', 'balanced_config',
    'DplError', 'ParameterError', 'DomainError', 'MissingBiasError', 'DimensionMismatchError',
    'InsufficientDataError', 'IdentifiabilityError', 'DivergenceError', 'UndefinedStatisticError',
    'InfeasibleFloorError', 'BudgetExceededError', 'PresetNotFoundError', 'ConfigError',
    'DataReadError', 'DataFormatError', 'SaveError'
]
