"""Dynamic non-Gaussian spatio-temporal models.

A Gaussian process whose scale is mixed by a spatial log-Gaussian field and
a temporal log-Gaussian process, with dynamic regression coefficients,
fitted by Metropolis-within-Gibbs MCMC with forward filtering backward
sampling.
"""

from .dataset import SpatioTemporalDataset
from .diagnostics import effective_sample_size, geweke_z
from .model import VARIANTS, ModelSpec, PriorSet, StaticParams, Variant
from .predict import (
    PredictionTask,
    PredictiveDraws,
    forecast_time,
    interpolate_lambda1,
    interpolate_space,
    predictive_summary,
)
from .sampler import PosteriorSamples, gibbs_sweep, log_posterior, run_chain
from .scoring import ScoreReport, interval_score, log_predictive_score, score_predictions, variogram_score
from .simulate import SimPlan, check_conditional_moments, nongaussian_mean_shift, simulate_dataset
from .spatial_cov import CorrelationKernel, SiteSet

__all__ = [
    "SpatioTemporalDataset", "effective_sample_size", "geweke_z", "VARIANTS", "ModelSpec", "PriorSet",
    "StaticParams", "Variant", "PredictionTask", "PredictiveDraws", "forecast_time", "interpolate_lambda1",
    "interpolate_space", "predictive_summary", "PosteriorSamples", "gibbs_sweep", "log_posterior", "run_chain",
    "ScoreReport", "interval_score", "log_predictive_score", "score_predictions", "variogram_score", "SimPlan",
    "check_conditional_moments", "nongaussian_mean_shift", "simulate_dataset", "CorrelationKernel", "SiteSet",
]
