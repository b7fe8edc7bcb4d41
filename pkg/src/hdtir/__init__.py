"""Heavy-tailed response regression: conditional Pareto tail index with lasso
estimation, debiased confidence intervals and extreme conditional quantiles."""

from .debias import DebiasedCoefficient, debias_cross_fit, debias_sample_split
from .errors import ConfigError, DataError, DivergenceError, HdtirError, ProjectionError
from .lasso import LassoConfig, LassoFit, fit_lasso
from .projection import ProjectionConfig, solve_projection
from .quantile import QuantileEstimate, conditional_quantile, quantile_inference
from .simulate import DgpConfig, run_monte_carlo, simulate_dataset
from .tail_data import Dataset, TailSample, extract_tail, select_threshold, tail_at_level

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "Dataset", "DebiasedCoefficient", "DgpConfig",
    "DivergenceError", "HdtirError", "LassoConfig", "LassoFit", "ProjectionConfig",
    "ProjectionError", "QuantileEstimate", "TailSample", "conditional_quantile",
    "debias_cross_fit", "debias_sample_split", "extract_tail", "fit_lasso",
    "quantile_inference", "run_monte_carlo", "select_threshold", "simulate_dataset",
    "solve_projection",
    "tail_at_level",
]
