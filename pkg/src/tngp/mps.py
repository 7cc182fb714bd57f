"""Matrix product state architectures and their contraction.

A network is described by :class:`MpsSpec` and a concrete draw of its
weights by :class:`TensorParams`.  Each site node has axes
``(phys, left_bond, right_bond)``; the designated output site of a hidden
layer network carries a trailing ``output`` axis.  Open chains store the
first node as ``(phys, 1, bond)`` and the last as ``(phys, bond, 1)`` so
that every chain is contracted the same way: multiply the per-site
matrices left to right and take the trace.

All functions accept a leading batch axis on the weights, which is how
ensembles of networks are evaluated in one pass (see :mod:`tngp.network`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import (
    CapacityError,
    DomainError,
    NumericOverflowError,
    StructuralError,
    UnsupportedActivationError,
    UsageError,
)

BOUNDARIES = ("periodic", "open")
FEATURE_KINDS = ("linear_complement", "neural_kernel")
ACTIVATIONS = ("erf", "tanh", "relu", "sigmoid", "identity")

BRUTE_FORCE_LIMIT = 10**6


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    return special.expit(z)


def _identity(z):
    return np.asarray(z, dtype=float)


_ACTIVATION_FUNCS = {
    "erf": special.erf,
    "tanh": np.tanh,
    "relu": _relu,
    "sigmoid": _sigmoid,
    "identity": _identity,
}


def activation_function(name):
    try:
        return _ACTIVATION_FUNCS[name]
    except KeyError:
        raise UnsupportedActivationError(
            f"unknown activation {name!r}; expected one of {ACTIVATIONS}"
        ) from None


@dataclass(frozen=True)
class MpsSpec:
    """Shape of a matrix product state.

    Args:
        n_sites: number of tensor nodes.
        bond_dim: dimension of every internal bond.
        phys_dim: dimension of the physical index contracted with the
            feature map.
        boundary: ``"periodic"`` (trace of the matrix chain) or ``"open"``.
        output_dim: size of the free output index of a hidden layer
            network; ``None`` for a scalar response.
        output_site: site that carries the output index.
    """

    n_sites: int
    bond_dim: int
    phys_dim: int = 2
    boundary: str = "periodic"
    output_dim: Optional[int] = None
    output_site: Optional[int] = None

    def __post_init__(self):
        for name in ("n_sites", "bond_dim", "phys_dim"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise UsageError(f"{name} must be a positive integer, got {value!r}")
        if self.boundary not in BOUNDARIES:
            raise UsageError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if (self.output_dim is None) != (self.output_site is None):
            raise UsageError("output_dim and output_site must be given together")
        if self.output_dim is not None:
            if self.output_dim < 1:
                raise UsageError("output_dim must be positive")
            if not 0 <= self.output_site < self.n_sites:
                raise UsageError(
                    f"output_site {self.output_site} outside [0, {self.n_sites})"
                )

    @property
    def has_output(self):
        return self.output_dim is not None

    def bond_shape(self, site):
        """(left, right) bond sizes of ``site``."""
        if self.boundary == "periodic":
            return self.bond_dim, self.bond_dim
        left = 1 if site == 0 else self.bond_dim
        right = 1 if site == self.n_sites - 1 else self.bond_dim
        return left, right

    def node_shape(self, site):
        left, right = self.bond_shape(site)
        shape = (self.phys_dim, left, right)
        if self.has_output and site == self.output_site:
            shape += (self.output_dim,)
        return shape

    def n_params(self):
        return sum(int(np.prod(self.node_shape(i))) for i in range(self.n_sites))

    def without_output(self):
        """Same chain with a scalar response."""
        return MpsSpec(self.n_sites, self.bond_dim, self.phys_dim, self.boundary)


@dataclass(frozen=True, eq=False)
class TensorParams:
    """Sampled node tensors, one array per site."""

    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(np.asarray(n, dtype=float) for n in self.nodes))
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node)):
                raise UsageError(f"node {i} has non-finite entries")

    def check(self, spec):
        if len(self.nodes) != spec.n_sites:
            raise StructuralError(
                f"expected {spec.n_sites} nodes, got {len(self.nodes)}"
            )
        for i, node in enumerate(self.nodes):
            if node.shape != spec.node_shape(i):
                raise StructuralError(
                    f"node {i} has shape {node.shape}, expected {spec.node_shape(i)}"
                )

    def scaled(self, site, factor):
        nodes = list(self.nodes)
        nodes[site] = nodes[site] * factor
        return TensorParams(tuple(nodes))

    def flat(self):
        return np.concatenate([n.ravel() for n in self.nodes])

    @classmethod
    def from_flat(cls, spec, vector):
        vector = np.asarray(vector, dtype=float)
        nodes, offset = [], 0
        for i in range(spec.n_sites):
            shape = spec.node_shape(i)
            size = int(np.prod(shape))
            nodes.append(vector[offset:offset + size].reshape(shape))
            offset += size
        if offset != vector.size:
            raise StructuralError(f"vector of length {vector.size} does not match spec")
        return cls(tuple(nodes))


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-site embedding of the input.

    ``linear_complement`` maps coordinate ``x_i`` to ``[x_i, 1 - x_i]``.
    ``neural_kernel`` feeds the bias-augmented input ``(1, x)`` through one
    dense layer ``a(W x)`` and reshapes the ``n_sites * phys_dim`` outputs
    into per-site blocks; ``weights`` has shape
    ``(n_sites * phys_dim, input_dim + 1)`` and may be left unbound when the
    weights are sampled per ensemble member.
    """

    kind: str = "linear_complement"
    activation: str = "erf"
    input_dim: int = 1
    weights: Optional[np.ndarray] = None
    check_domain: bool = True

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise UsageError(f"feature kind must be one of {FEATURE_KINDS}, got {self.kind!r}")
        activation_function(self.activation)
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def validate(self, spec):
        if self.kind == "linear_complement" and spec.phys_dim != 2:
            raise UsageError("linear_complement feature map requires phys_dim = 2")
        if self.kind == "neural_kernel" and self.weights is not None:
            expected = (spec.n_sites * spec.phys_dim, self.input_dim + 1)
            if self.weights.shape != expected:
                raise StructuralError(
                    f"neural kernel weights have shape {self.weights.shape}, expected {expected}"
                )

    def input_length(self, spec):
        return spec.n_sites if self.kind == "linear_complement" else self.input_dim

    def bind(self, weights):
        return FeatureMap(self.kind, self.activation, self.input_dim, weights, self.check_domain)


def as_point(x, length=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise StructuralError(f"input point must be a vector, got shape {x.shape}")
    if length is not None and x.size != length:
        raise StructuralError(f"input point has length {x.size}, expected {length}")
    return x


def augment(x):
    """Prepend the constant bias coordinate."""
    x = np.asarray(x, dtype=float)
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([ones, x], axis=-1)


def check_unit_interval(x):
    x = np.asarray(x)
    if np.any((x < 0.0) | (x > 1.0)) or not np.all(np.isfinite(x)):
        raise DomainError(f"linear_complement inputs must lie in [0, 1], got {x}")


def linear_complement(x):
    """Stack ``[x, 1 - x]`` along a new last axis."""
    x = np.asarray(x, dtype=float)
    return np.stack([x, 1.0 - x], axis=-1)


def neural_kernel_forward(weights, activation, x):
    """Dense layer ``a(W x)``.

    ``weights`` may carry leading batch axes; ``x`` is a single vector whose
    length equals the last axis of ``weights``.
    """
    weights = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    if weights.ndim < 2 or weights.shape[-1] != x.shape[-1]:
        raise StructuralError(
            f"weights of shape {weights.shape} cannot act on input of length {x.shape[-1]}"
        )
    return activation_function(activation)(weights @ x)


def site_features(fm, spec, x):
    """All per-site feature vectors, shape ``(..., n_sites, phys_dim)``."""
    x = as_point(x, fm.input_length(spec))
    if fm.kind == "linear_complement":
        if fm.check_domain:
            check_unit_interval(x)
        return linear_complement(x)
    if fm.weights is None:
        raise UsageError("neural_kernel feature map has no bound weights")
    a = neural_kernel_forward(fm.weights, fm.activation, augment(x))
    return a.reshape(a.shape[:-1] + (spec.n_sites, spec.phys_dim))


def local_feature(fm, x, site, spec=None):
    """Feature vector at one site.

    For ``linear_complement`` ``spec`` may be omitted and ``x`` is the full
    site-wise input.  The neural kernel needs ``spec`` to know how its
    outputs are blocked.
    """
    x = as_point(x)
    if fm.kind == "linear_complement":
        if not 0 <= site < x.size:
            raise StructuralError(f"site {site} outside input of length {x.size}")
        if fm.check_domain:
            check_unit_interval(x[site])
        return linear_complement(x[site])
    if spec is None:
        raise UsageError("neural_kernel local_feature needs the MpsSpec")
    if not 0 <= site < spec.n_sites:
        raise StructuralError(f"site {site} outside [0, {spec.n_sites})")
    return site_features(fm, spec, x)[..., site, :]


def site_matrix(node, phi, output=False):
    """Contract the physical index of ``node`` with ``phi``.

    ``node`` is ``(..., phys, left, right)``, or ``(..., phys, left, right,
    out)`` when ``output`` is set, and ``phi`` is ``(..., phys)``; batch axes
    broadcast.  Output nodes come back as ``(..., out, left, right)`` so the
    output index rides along as a batch axis during the chain product.
    """
    node = np.asarray(node, dtype=float)
    phi = np.asarray(phi, dtype=float)
    phys_axis = -4 if output else -3
    if node.ndim < -phys_axis or phi.ndim < 1:
        raise StructuralError(f"node shape {node.shape} has too few axes")
    if node.shape[phys_axis] != phi.shape[-1]:
        raise StructuralError(
            f"node physical dimension {node.shape[phys_axis]} does not match "
            f"feature length {phi.shape[-1]}"
        )
    if output:
        return np.einsum("...sabl,...s->...lab", node, phi)
    return np.einsum("...sab,...s->...ab", node, phi)


def contract_chain(mats, raise_on_overflow=True):
    """Trace of the ordered product of per-site matrices.

    ``mats`` is a sequence of arrays ``(..., left, right)`` whose batch axes
    broadcast.  Returns the traces and, when ``raise_on_overflow`` is false,
    the index of the first site after which any value became non-finite
    (``None`` if all finite).
    """
    acc = None
    bad_site = None
    with np.errstate(over="ignore", invalid="ignore"):
        for i, m in enumerate(mats):
            acc = m if acc is None else acc @ m
            if bad_site is None and not np.all(np.isfinite(acc)):
                bad_site = i
                if raise_on_overflow:
                    raise NumericOverflowError(i)
        out = np.trace(acc, axis1=-2, axis2=-1)
    if raise_on_overflow:
        return out
    return out, bad_site


def _site_mats(spec, params, fm, x):
    params.check(spec)
    fm.validate(spec)
    phis = site_features(fm, spec, x)
    return [
        site_matrix(params.nodes[i], phis[i], output=spec.has_output and i == spec.output_site)
        for i in range(spec.n_sites)
    ]


def evaluate_pure(spec, params, fm, x):
    """Scalar response of a network without an output index."""
    if spec.has_output:
        raise UsageError("evaluate_pure needs a spec without output_dim")
    return float(contract_chain(_site_mats(spec, params, fm, x)))


def evaluate_hidden(spec, params, fm, x):
    """Vector ``psi^l`` of a network with an output index on one site."""
    if not spec.has_output:
        raise UsageError("evaluate_hidden needs a spec with output_dim")
    return np.asarray(contract_chain(_site_mats(spec, params, fm, x)), dtype=float)


def brute_force_evaluate(spec, params, fm, x):
    """Reference contraction by explicit summation over bond sequences.

    Every closed bond-index sequence contributes the product of the
    corresponding site-matrix entries; nothing is multiplied as a matrix.
    """
    mats = _site_mats(spec, params, fm, x)
    # Bond k sits between site k-1 and site k; bond 0 closes the ring.
    sizes = [spec.bond_shape(k)[0] for k in range(spec.n_sites)]
    n_terms = int(np.prod(sizes, dtype=float))
    if n_terms > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"{n_terms} bond sequences exceed the limit {BRUTE_FORCE_LIMIT}")
    out_shape = (spec.output_dim,) if spec.has_output else ()
    total = np.zeros(out_shape)
    n = spec.n_sites
    for seq in itertools.product(*(range(s) for s in sizes)):
        term = np.ones(out_shape)
        for i in range(n):
            term = term * mats[i][..., seq[i], seq[(i + 1) % n]]
        total = total + term
    return total if spec.has_output else float(total)
