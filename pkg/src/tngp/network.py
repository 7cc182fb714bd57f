"""The three architectures as random functions.

A :class:`Model` bundles an :class:`~tngp.mps.MpsSpec`, a feature map, a
prior and (for the hidden-layer network) a readout activation.  Ensembles
of independently sampled networks are drawn chunk by chunk and evaluated
with batched contractions; nothing here holds more than one chunk of
weights in memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import UsageError
from .mps import (
    FeatureMap,
    MpsSpec,
    activation_function,
    as_point,
    augment,
    check_unit_interval,
    contract_chain,
    linear_complement,
    neural_kernel_forward,
    site_matrix,
)
from .priors import (
    CHUNK_SIZE,
    PriorSpec,
    as_seed,
    map_chunks,
    sample_tensor_chunk,
    standard_normal_chunk,
)

MODEL_KINDS = ("pure_mps", "neural_kernel_mps", "mps_hidden_nn")


@dataclass(frozen=True)
class Model:
    kind: str
    spec: MpsSpec
    prior: PriorSpec = field(default_factory=PriorSpec)
    feature: FeatureMap = field(default_factory=FeatureMap)
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise UsageError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        activation_function(self.activation)
        if self.kind == "mps_hidden_nn":
            if not self.spec.has_output:
                raise UsageError("mps_hidden_nn needs output_dim and output_site")
        elif self.spec.has_output:
            raise UsageError(f"{self.kind} takes no output_dim")
        if self.kind == "neural_kernel_mps":
            if self.feature.kind != "neural_kernel":
                raise UsageError("neural_kernel_mps needs a neural_kernel feature map")
        elif self.feature.kind != "linear_complement":
            raise UsageError(f"{self.kind} needs the linear_complement feature map")
        self.feature.validate(self.spec)

    @property
    def input_length(self):
        return self.feature.input_length(self.spec)

    def with_prior(self, **changes):
        return replace(self, prior=replace(self.prior, **changes))

    def with_spec(self, **changes):
        return replace(self, spec=replace(self.spec, **changes))

    def point(self, x):
        x = as_point(x, self.input_length)
        if self.feature.kind == "linear_complement" and self.feature.check_domain:
            check_unit_interval(x)
        return x


@dataclass(frozen=True, eq=False)
class Ensemble:
    """One chunk of sampled networks; every array has a leading sample axis."""

    nodes: list
    kernel_weights: Optional[np.ndarray] = None
    readout_weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.nodes[0].shape[0]


def draw_chunk(model, seed, chunk_index, size):
    seed = as_seed(seed)
    spec, prior = model.spec, model.prior
    nodes = sample_tensor_chunk(spec, prior, seed, chunk_index, size)
    kernel_weights = readout = bias = None
    if model.kind == "neural_kernel_mps":
        shape = (spec.n_sites * spec.phys_dim, model.feature.input_dim + 1)
        kernel_weights = prior.sigma_w_kernel * standard_normal_chunk(
            seed.child("kernel_weights"), chunk_index, size, shape)
    if model.kind == "mps_hidden_nn":
        readout = prior.readout_std(spec.output_dim) * standard_normal_chunk(
            seed.child("readout_weights"), chunk_index, size, (spec.output_dim,))
        bias = prior.sigma_b * standard_normal_chunk(
            seed.child("readout_bias"), chunk_index, size, ())
    return Ensemble(nodes, kernel_weights, readout, bias)


def _features(model, ens, x):
    spec = model.spec
    if model.feature.kind == "linear_complement":
        return linear_complement(x)
    a = neural_kernel_forward(ens.kernel_weights, model.feature.activation, augment(x))
    return a.reshape(a.shape[:-1] + (spec.n_sites, spec.phys_dim))


def chain_values(model, ens, x, raise_on_overflow=False):
    """Raw chain contraction per sample: ``(k,)`` or ``(k, L)`` for hidden.

    Returns ``(values, bad_site)``; see :func:`~tngp.mps.contract_chain`.
    """
    spec = model.spec
    phis = _features(model, ens, x)
    mats = []
    for i in range(spec.n_sites):
        phi = phis[..., i, :]
        is_out = spec.has_output and i == spec.output_site
        z = site_matrix(ens.nodes[i], phi, output=is_out)
        if spec.has_output and not is_out:
            z = z[:, None]
        mats.append(z)
    out = contract_chain(mats, raise_on_overflow=raise_on_overflow)
    return out


def hidden_activations(model, ens, x):
    """``a(psi^l(x))`` per sample, shape ``(k, L)``."""
    psi, bad = chain_values(model, ens, x)
    with np.errstate(over="ignore", invalid="ignore"):
        return activation_function(model.activation)(psi), bad


def forward(model, ens, x):
    """Network response per sample and the first overflowing site."""
    if model.kind != "mps_hidden_nn":
        return chain_values(model, ens, x)
    act, bad = hidden_activations(model, ens, x)
    with np.errstate(over="ignore", invalid="ignore"):
        return ens.bias + np.einsum("kl,kl->k", ens.readout_weights, act), bad


def sample_responses(model, points, count, seed, what="forward"):
    """Evaluate ``count`` sampled networks at every point.

    ``what="forward"`` gives an array ``(count, P)`` of responses;
    ``what="hidden"`` gives readout-layer inputs ``(count, P, L)``.
    Non-finite entries are left in place for the caller to count.
    """
    pts = [model.point(p) for p in points]
    seed = as_seed(seed)

    def run(chunk_index, start, size):
        ens = draw_chunk(model, seed, chunk_index, size)
        cols = []
        for x in pts:
            if what == "hidden":
                vals, _ = hidden_activations(model, ens, x)
            else:
                vals, _ = forward(model, ens, x)
            cols.append(vals)
        return np.stack(cols, axis=1)

    return np.concatenate(map_chunks(run, count, CHUNK_SIZE), axis=0)
