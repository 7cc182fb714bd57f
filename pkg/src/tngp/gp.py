"""Gaussian process regression and sampling on top of the induced kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import (
    NotPSDError,
    NumericOverflowError,
    SearchFailedError,
    TngpError,
    UsageError,
)
from .kernels import build_gram, jittered_cholesky
from .network import sample_responses
from .priors import as_seed, standard_normal_block


@dataclass(frozen=True, eq=False)
class GpPosterior:
    kernel: object
    points: list
    y: np.ndarray
    sigma_n: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float


@dataclass(frozen=True, eq=False)
class PathSample:
    grid: list
    values: np.ndarray
    source: str
    seed: object
    label: dict = None


class LikelihoodTerms(NamedTuple):
    data_fit: float
    complexity: float
    constant: float

    @property
    def total(self):
        return self.data_fit + self.complexity + self.constant


def fit(kernel, points, y, sigma_n=0.0):
    points = list(points)
    y = np.asarray(y, dtype=float).ravel()
    if len(points) == 0 or len(points) != y.size:
        raise UsageError(f"need as many targets as points, got {len(points)} and {y.size}")
    if sigma_n < 0:
        raise UsageError("sigma_n must be nonnegative")
    gram = build_gram(kernel, points)
    cov_y = gram.entries + sigma_n**2 * np.eye(len(points))
    chol, jitter = jittered_cholesky(cov_y)
    if np.any(np.diag(chol) <= 0):
        raise NotPSDError("noise-free covariance is identically zero; cannot condition on data")
    alpha = cho_solve((chol, True), y)
    return GpPosterior(kernel, points, y, float(sigma_n), chol, alpha, jitter)


def predict(post, x_star):
    """Posterior predictive mean vector and covariance matrix."""
    x_star = list(x_star)
    k_star = post.kernel.cross(post.points, x_star)
    k_ss = post.kernel.cross(x_star, x_star)
    mean = k_star.T @ post.alpha
    v = solve_triangular(post.chol, k_star, lower=True)
    cov = k_ss - v.T @ v
    return mean, 0.5 * (cov + cov.T)


def prior_predict(kernel, x_star):
    """Prior mean and covariance when no data have been observed."""
    gram = build_gram(kernel, list(x_star))
    return np.zeros(gram.size), gram.entries


def likelihood_terms(post):
    data_fit = -0.5 * float(post.y @ post.alpha)
    complexity = -float(np.sum(np.log(np.diag(post.chol))))
    constant = -0.5 * post.y.size * math.log(2.0 * math.pi)
    return LikelihoodTerms(data_fit, complexity, constant)


def log_marginal_likelihood(post):
    return likelihood_terms(post).total


def sample_paths_gp(kernel, grid, count, seed):
    """Draw paths from the Gaussian process restricted to ``grid``."""
    grid = list(grid)
    if not grid or count < 1:
        raise UsageError("need a nonempty grid and count >= 1")
    seed = as_seed(seed)
    gram = build_gram(kernel, grid)
    z = standard_normal_block(seed.child("gp_paths"), count, (len(grid),))
    values = z @ gram.chol.T
    return [PathSample(grid, values[i], "gp_cholesky", seed) for i in range(count)]


def sample_paths_prior(model, grid, count, seed):
    """Draw networks from the prior and evaluate each along ``grid``."""
    grid = list(grid)
    if not grid or count < 1:
        raise UsageError("need a nonempty grid and count >= 1")
    seed = as_seed(seed)
    values = sample_responses(model, grid, count, seed)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericOverflowError(
            None, f"{int(bad.any(axis=1).sum())} sampled paths overflowed; rescale the prior"
        )
    return [PathSample(grid, values[i], "prior_forward", seed) for i in range(count)]


def sample_sigma_family(model, grid, sigmas, seed):
    """One prior path per ``sigma_A`` from a shared set of standard-normal draws."""
    paths = []
    for sigma in sigmas:
        scaled = model.with_prior(sigma_A=float(sigma), scaling="fixed")
        path = sample_paths_prior(scaled, grid, 1, seed)[0]
        paths.append(PathSample(grid, path.values, path.source, path.seed, {"sigma_A": float(sigma)}))
    return paths


def grid_search_sigma(kernel, points, y, sigma_n, sigma_grid):
    """Maximize the log marginal likelihood over node std ``sigma_A``.

    Each candidate is evaluated with fixed scaling.  Ties go to the smaller
    value.  Returns the best value and a list of ``(sigma, log_lik)`` rows,
    with ``nan`` for candidates whose covariance could not be factorized.
    """
    sigma_grid = sorted(float(s) for s in sigma_grid)
    if not sigma_grid or any(s <= 0 for s in sigma_grid):
        raise UsageError("sigma_grid must be nonempty and positive")
    table, failures = [], {}
    best, best_ll = None, -math.inf
    for sigma in sigma_grid:
        candidate = kernel.with_prior(sigma_A=sigma, scaling="fixed")
        try:
            ll = log_marginal_likelihood(fit(candidate, points, y, sigma_n))
        except TngpError as exc:
            failures[sigma] = str(exc)
            table.append((sigma, math.nan))
            continue
        table.append((sigma, ll))
        if ll > best_ll:
            best, best_ll = sigma, ll
    if best is None:
        raise SearchFailedError("every sigma candidate failed", failures)
    return best, table
