"""Gaussian processes induced by infinitely wide tensor networks."""

from .errors import TngpError
from .gp import (
    GpPosterior,
    PathSample,
    fit,
    grid_search_sigma,
    log_marginal_likelihood,
    predict,
    sample_paths_gp,
    sample_paths_prior,
)
from .kernels import (
    GramMatrix,
    KernelFunction,
    McEstimate,
    activation_expectation,
    build_gram,
    mc_cov,
    mean_function,
    neural_kernel_mps_cov,
    pure_mps_cov,
    taylor_cov,
    taylor_expectation,
)
from .mps import (
    FeatureMap,
    MpsSpec,
    TensorParams,
    brute_force_evaluate,
    evaluate_hidden,
    evaluate_pure,
    local_feature,
    neural_kernel_forward,
    site_matrix,
)
from .network import Model
from .priors import PriorSpec, Seed, auto_sigma_A, sample_neural_weights, sample_tensor_params
from .stats import EnsembleReport, empirical_corr, ks_normality, width_sweep

__version__ = "0.1.0"
