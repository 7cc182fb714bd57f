"""Mean and covariance functions of the induced Gaussian processes.

Closed forms exist for the pure chain with the ``[x, 1 - x]`` feature map
and for the neural-kernel chain with an erf layer.  The hidden-layer
network is handled by Monte Carlo over the node tensors or by a
second-order Taylor expansion of the integrand around the prior mean.

The prefactor counts the bond-index sums that survive the expectation.  A
periodic chain has ``alpha**n`` closed index loops; an open chain has
``alpha**(n-1)`` free internal bonds.  ``default_convention`` encodes that
pairing, which the Monte Carlo adjudication (``tngp mc-check``) confirms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    EstimatorUnstableError,
    NotPSDError,
    StepSizeError,
    UnsupportedActivationError,
    UsageError,
)
from .mps import (
    TensorParams,
    activation_function,
    augment,
    contract_chain,
    linear_complement,
    site_matrix,
)
from .network import Model, sample_responses
from .priors import Seed, as_seed, standard_normal_block

ESTIMATORS = ("analytic", "monte_carlo", "taylor")
CONVENTIONS = ("paper_alpha_nm1", "trace_alpha_n")
MIN_MC_SAMPLES = 100
MAX_REJECT_FRACTION = 0.01

JITTER_START = 1e-10
JITTER_CAP = 1e-4


def default_convention(boundary):
    return "trace_alpha_n" if boundary == "periodic" else "paper_alpha_nm1"


def prefactor(spec, convention=None):
    convention = convention or default_convention(spec.boundary)
    if convention == "paper_alpha_nm1":
        return float(spec.bond_dim) ** (spec.n_sites - 1)
    if convention == "trace_alpha_n":
        return float(spec.bond_dim) ** spec.n_sites
    raise UsageError(f"prefactor convention must be one of {CONVENTIONS}, got {convention!r}")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int
    rejected: int = 0

    def z_score(self, reference):
        """Standardized deviation from ``reference``; infinite if the
        estimate has no spread and differs."""
        diff = self.value - reference
        if self.std_error > 0:
            return diff / self.std_error
        scale = max(abs(reference), abs(self.value), 1e-300)
        return 0.0 if abs(diff) <= 1e-12 * scale else math.copysign(math.inf, diff)


def mc_summary(values, requested):
    """Mean and standard error of the finite entries of ``values``."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    rejected = int(values.size - finite.sum())
    if rejected > MAX_REJECT_FRACTION * requested:
        raise EstimatorUnstableError(
            f"{rejected} of {requested} Monte Carlo samples overflowed"
        )
    kept = values[finite]
    std = float(np.std(kept, ddof=1)) if kept.size > 1 else 0.0
    return McEstimate(float(np.mean(kept)), std / math.sqrt(kept.size), int(kept.size), rejected)


@dataclass(frozen=True)
class KernelFunction:
    """Covariance of one architecture under one estimator."""

    model: Model
    estimator: str = "analytic"
    mc_samples: int = 10_000
    mc_seed: Seed = field(default_factory=Seed)
    prefactor_convention: Optional[str] = None
    taylor_step: Optional[float] = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise UsageError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.estimator == "analytic":
            kind = self.model.kind
            if kind == "mps_hidden_nn":
                raise UsageError("no closed form for mps_hidden_nn; use monte_carlo or taylor")
            if kind == "neural_kernel_mps" and self.model.feature.activation != "erf":
                raise UnsupportedActivationError(
                    "closed-form neural kernel covariance needs the erf activation"
                )
        if self.estimator == "taylor" and self.model.kind != "mps_hidden_nn":
            raise UsageError("taylor estimator applies to mps_hidden_nn only")
        if self.estimator == "monte_carlo" and self.mc_samples < MIN_MC_SAMPLES:
            raise UsageError(f"mc_samples must be at least {MIN_MC_SAMPLES}")
        if self.prefactor_convention is not None:
            prefactor(self.model.spec, self.prefactor_convention)
        object.__setattr__(self, "mc_seed", as_seed(self.mc_seed))

    @property
    def kind(self):
        return self.model.kind

    def with_prior(self, **changes):
        return replace(self, model=self.model.with_prior(**changes))

    def covariance(self, x, xp):
        if self.estimator == "analytic":
            if self.kind == "pure_mps":
                return pure_mps_cov(self, x, xp)
            return neural_kernel_mps_cov(self, x, xp)
        if self.estimator == "taylor":
            return taylor_cov(self, x, xp)
        return mc_cov(self.model, x, xp, self.mc_samples, self.mc_seed).value

    def cross(self, points_a, points_b):
        """Covariance block between two point lists.

        Monte Carlo blocks reuse the kernel's single parameter stream so
        blocks computed separately are consistent with one joint Gram.
        """
        if self.estimator == "monte_carlo":
            feats = _mc_features(self.model, list(points_a) + list(points_b),
                                 self.mc_samples, self.mc_seed)
            na = len(points_a)
            return _mc_gram(self.model, feats[:, :na], feats[:, na:])
        return np.array([[self.covariance(a, b) for b in points_b] for a in points_a])


def mean_function(kernel, x):
    """Prior mean; every architecture has zero-mean weights."""
    return 0.0


def _scaled_prefactor(kernel):
    spec = kernel.model.spec
    sigma = kernel.model.prior.tensor_std(spec)
    return prefactor(spec, kernel.prefactor_convention) * sigma ** (2 * spec.n_sites)


def pure_mps_cov(kernel, x, xp):
    """Closed-form covariance of the pure chain with ``[x, 1 - x]`` features."""
    if kernel.kind != "pure_mps" or kernel.model.feature.kind != "linear_complement":
        raise UsageError("pure_mps_cov needs a pure_mps kernel with linear_complement features")
    x = kernel.model.point(x)
    xp = kernel.model.point(xp)
    site_dots = np.einsum("is,is->i", linear_complement(x), linear_complement(xp))
    return float(_scaled_prefactor(kernel) * np.prod(site_dots))


def _erf_expectation(sigma_w, x, xp):
    xt, xpt = augment(np.atleast_1d(x)), augment(np.atleast_1d(xp))
    s2 = sigma_w**2
    num = 2.0 * s2 * float(xt @ xpt)
    den = math.sqrt((1.0 + 2.0 * s2 * float(xt @ xt)) * (1.0 + 2.0 * s2 * float(xpt @ xpt)))
    return 2.0 / math.pi * math.asin(num / den)


def activation_expectation(activation, sigma_w, x, xp):
    """``E[a(w.(1,x)) a(w.(1,x'))]`` for ``w ~ N(0, sigma_w**2 I)``, erf only.

    Uses the arcsine form of the erf network expectation.
    """
    if activation != "erf":
        raise UnsupportedActivationError(
            f"no closed form for activation {activation!r}; use activation_expectation_mc"
        )
    return _erf_expectation(sigma_w, x, xp)


def activation_expectation_mc(activation, sigma_w, x, xp, m, seed):
    """Monte Carlo counterpart of :func:`activation_expectation`."""
    if m < MIN_MC_SAMPLES:
        raise UsageError(f"m must be at least {MIN_MC_SAMPLES}")
    xt, xpt = augment(np.atleast_1d(x)), augment(np.atleast_1d(xp))
    w = sigma_w * standard_normal_block(as_seed(seed).child("activation_mc"), m, xt.shape)
    a = activation_function(activation)
    return mc_summary(a(w @ xt) * a(w @ xpt), m)


def neural_kernel_mps_cov(kernel, x, xp):
    """Closed-form covariance of the erf neural-kernel chain."""
    if kernel.kind != "neural_kernel_mps":
        raise UsageError("neural_kernel_mps_cov needs a neural_kernel_mps kernel")
    model = kernel.model
    x, xp = model.point(x), model.point(xp)
    e = activation_expectation(model.feature.activation, model.prior.sigma_w_kernel, x, xp)
    spec = model.spec
    return float(_scaled_prefactor(kernel) * (spec.phys_dim * e) ** spec.n_sites)


def _mc_features(model, points, m, seed):
    if model.kind == "mps_hidden_nn":
        return sample_responses(model, points, m, seed, what="hidden")
    return sample_responses(model, points, m, seed)


def _readout_terms(model):
    spec, prior = model.spec, model.prior
    return prior.sigma_b**2, prior.readout_total_variance(spec.output_dim) / spec.output_dim


def _mc_gram(model, fa, fb):
    m = fa.shape[0]
    bad = ~(np.all(np.isfinite(fa.reshape(m, -1)), axis=1) & np.all(np.isfinite(fb.reshape(m, -1)), axis=1))
    if bad.sum() > MAX_REJECT_FRACTION * m:
        raise EstimatorUnstableError(f"{int(bad.sum())} of {m} Monte Carlo samples overflowed")
    fa, fb = fa[~bad], fb[~bad]
    k = fa.shape[0]
    if model.kind == "mps_hidden_nn":
        bias_var, weight_var = _readout_terms(model)
        return bias_var + weight_var * np.einsum("kpl,kql->pq", fa, fb) / k
    return fa.T @ fb / k


def mc_cov(model, x, xp, m, seed):
    """Monte Carlo covariance with its standard error.

    Pure and neural-kernel chains average ``psi(x) psi(x')`` over ``m``
    sampled networks.  For the hidden-layer network the readout weights and
    bias are integrated exactly and only the node tensors are sampled:
    ``sigma_b**2 + var_w_total / L * sum_l a(psi^l(x)) a(psi^l(x'))``.
    """
    if m < MIN_MC_SAMPLES:
        raise UsageError(f"m must be at least {MIN_MC_SAMPLES}")
    feats = _mc_features(model, [x, xp], m, seed)
    if model.kind == "mps_hidden_nn":
        bias_var, weight_var = _readout_terms(model)
        prods = np.einsum("kl,kl->k", feats[:, 0], feats[:, 1])
        est = mc_summary(prods, m)
        return McEstimate(bias_var + weight_var * est.value, weight_var * est.std_error,
                          est.samples, est.rejected)
    return mc_summary(feats[:, 0] * feats[:, 1], m)


def taylor_expectation(f, a0, var_a, h):
    """Second-order estimate ``f(a0) + 1/2 sum_i var_i H_ii``.

    The Hessian diagonal comes from central differences with step ``h``.
    The third-order remainder is dropped, so the result is exact only when
    ``f`` is at most quadratic in each coordinate.
    """
    if not h > 0:
        raise UsageError(f"step h must be positive, got {h}")
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    var_a = np.broadcast_to(np.asarray(var_a, dtype=float), a0.shape)
    if not np.all(np.isfinite(a0)):
        raise UsageError("expansion point must be finite")
    f0 = float(f(a0))
    correction = 0.0
    for i in range(a0.size):
        if var_a[i] == 0:
            continue
        step = np.zeros_like(a0)
        step[i] = h
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                d2 = (float(f(a0 + step)) - 2.0 * f0 + float(f(a0 - step))) / h**2
        except OverflowError:
            d2 = math.inf
        if not math.isfinite(d2):
            raise StepSizeError(
                f"non-finite second difference at coordinate {i} with h={h}; try a larger h"
            )
        correction += var_a[i] * d2
    return f0 + 0.5 * correction


def default_taylor_step(sigma_a):
    return 1e-3 * max(sigma_a, 1e-3)


def taylor_cov(kernel, x, xp):
    """Taylor approximation of the hidden-layer covariance around zero weights.

    One output component stands in for all of them (they are exchangeable),
    so the parameter vector is the chain with the output index fixed to 0.
    """
    model = kernel.model
    if model.kind != "mps_hidden_nn":
        raise UsageError("taylor_cov needs an mps_hidden_nn kernel")
    spec = model.spec.without_output()
    x, xp = model.point(x), model.point(xp)
    phis, phips = linear_complement(x), linear_complement(xp)
    act = activation_function(model.activation)
    sigma = model.prior.tensor_std(model.spec)

    def g(vec):
        params = TensorParams.from_flat(spec, vec)
        mats = [site_matrix(n, phis[i]) for i, n in enumerate(params.nodes)]
        matps = [site_matrix(n, phips[i]) for i, n in enumerate(params.nodes)]
        return act(contract_chain(mats)) * act(contract_chain(matps))

    n_params = spec.n_params()
    h = kernel.taylor_step or default_taylor_step(sigma)
    expectation = taylor_expectation(g, np.zeros(n_params), np.full(n_params, sigma**2), h)
    total_var = model.prior.readout_total_variance(model.spec.output_dim)
    return model.prior.sigma_b**2 + total_var * expectation


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric covariance matrix with the jitter its factorization needed."""

    entries: np.ndarray
    jitter: float
    chol: np.ndarray

    @property
    def size(self):
        return self.entries.shape[0]


def jittered_cholesky(matrix):
    """Lower Cholesky factor of ``matrix + jitter I`` with the smallest
    jitter from the schedule that works.

    The schedule starts with no jitter, then ``1e-10`` times the mean
    diagonal, growing tenfold up to ``1e-4`` times the mean diagonal.  An
    all-zero matrix is returned with a zero factor.
    """
    matrix = np.asarray(matrix, dtype=float)
    if not np.any(matrix):
        return np.zeros_like(matrix), 0.0
    scale = float(np.mean(np.diag(matrix)))
    candidates = [0.0]
    if scale > 0:
        j = JITTER_START * scale
        while j <= JITTER_CAP * scale * (1 + 1e-9):
            candidates.append(j)
            j *= 10.0
    eye = np.eye(matrix.shape[0])
    for jitter in candidates:
        try:
            return np.linalg.cholesky(matrix + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    min_eig = float(np.linalg.eigvalsh(matrix)[0]) if np.all(np.isfinite(matrix)) else math.nan
    raise NotPSDError(
        f"matrix not positive definite at maximum jitter; smallest eigenvalue {min_eig:.3e}",
        min_eig,
    )


def build_gram(kernel, points):
    points = list(points)
    if not points:
        raise UsageError("build_gram needs at least one point")
    if kernel.estimator == "monte_carlo":
        feats = _mc_features(kernel.model, points, kernel.mc_samples, kernel.mc_seed)
        entries = _mc_gram(kernel.model, feats, feats)
    else:
        n = len(points)
        entries = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                entries[i, j] = entries[j, i] = kernel.covariance(points[i], points[j])
    entries = 0.5 * (entries + entries.T)
    chol, jitter = jittered_cholesky(entries)
    return GramMatrix(entries, jitter, chol)
