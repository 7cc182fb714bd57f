"""Weight priors, seeding and the variance-scaling rules.

Random numbers come from Philox, a counter-based generator, keyed by a
:class:`Seed` that is a pure function of a root integer and a tuple of
labels.  Large draws are split into fixed-size chunks, each with its own
labelled stream, so a draw of ``count`` samples is identical whether the
chunks are produced sequentially or by a pool of workers, and the first
``k`` samples of any draw do not depend on ``count``.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .mps import MpsSpec, TensorParams

SCALINGS = ("fixed", "auto_alpha")
READOUT_SCALINGS = ("fixed", "one_over_L")

CHUNK_SIZE = 4096


def worker_count():
    """Worker threads allowed by ``TNGP_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("TNGP_THREADS", "1")))
    except ValueError:
        return 1


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class Seed:
    root: int = 0
    labels: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.root) < 2**64:
            raise UsageError(f"seed root must be an unsigned 64-bit integer, got {self.root}")
        object.__setattr__(self, "root", int(self.root))
        object.__setattr__(self, "labels", tuple((str(t), int(i)) for t, i in self.labels))

    def child(self, tag, index=0):
        return Seed(self.root, self.labels + ((tag, index),))

    def spawn_key(self):
        key = []
        for tag, index in self.labels:
            key.extend((_tag_key(tag), index))
        return tuple(key)

    def generator(self):
        ss = np.random.SeedSequence(self.root, spawn_key=self.spawn_key())
        return np.random.Generator(np.random.Philox(ss))


def as_seed(seed):
    return seed if isinstance(seed, Seed) else Seed(int(seed))


def map_chunks(func, count, chunk_size=CHUNK_SIZE):
    """Apply ``func(chunk_index, start, size)`` over the chunks of ``count``.

    Results come back in chunk order regardless of ``TNGP_THREADS``.
    """
    bounds = [(c, start, min(chunk_size, count - start))
              for c, start in enumerate(range(0, count, chunk_size))]
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        return [func(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: func(*b), bounds))


def standard_normal_chunk(seed, chunk_index, size, shape):
    return seed.child("chunk", chunk_index).generator().standard_normal((size,) + tuple(shape))


def standard_normal_block(seed, count, shape):
    """``count`` independent standard-normal arrays of ``shape``."""
    parts = map_chunks(lambda c, start, size: standard_normal_chunk(seed, c, size, shape), count)
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class PriorSpec:
    """Standard deviations of the Gaussian weight priors.

    ``sigma_w_readout`` is the per-weight std of the readout layer under
    ``readout_scaling="fixed"``; under ``"one_over_L"`` it is the
    width-independent scale and each of the ``L`` weights gets
    ``sigma_w_readout / sqrt(L)``.
    """

    sigma_A: float = 1.0
    sigma_w_kernel: float = 1.0
    sigma_w_readout: float = 1.0
    sigma_b: float = 0.0
    scaling: str = "fixed"
    readout_scaling: str = "one_over_L"

    def __post_init__(self):
        for name in ("sigma_A", "sigma_w_kernel", "sigma_w_readout", "sigma_b"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise UsageError(f"{name} must be finite and nonnegative, got {value}")
            object.__setattr__(self, name, value)
        if self.sigma_A <= 0:
            raise UsageError("sigma_A must be positive")
        if self.scaling not in SCALINGS:
            raise UsageError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if self.readout_scaling not in READOUT_SCALINGS:
            raise UsageError(
                f"readout_scaling must be one of {READOUT_SCALINGS}, got {self.readout_scaling!r}"
            )

    def tensor_std(self, spec):
        if self.scaling == "auto_alpha":
            return auto_sigma_A(spec.bond_dim, spec.n_sites)
        return self.sigma_A

    def readout_std(self, output_dim):
        if self.readout_scaling == "one_over_L":
            return self.sigma_w_readout / math.sqrt(output_dim)
        return self.sigma_w_readout

    def readout_total_variance(self, output_dim):
        """Sum over the ``L`` readout weights of their variances."""
        return output_dim * self.readout_std(output_dim) ** 2


def auto_sigma_A(alpha, n):
    """Node std that makes ``alpha**(n-1) * sigma**(2n)`` equal one."""
    if alpha < 1 or n < 1:
        raise UsageError("alpha and n must be at least 1")
    return float(alpha) ** ((1.0 - n) / (2.0 * n))


def node_seed(seed, site):
    return as_seed(seed).child("node", site)


def sample_tensor_chunk(spec, prior, seed, chunk_index, size):
    """Node arrays with a leading sample axis for one chunk."""
    std = prior.tensor_std(spec)
    return [
        std * standard_normal_chunk(node_seed(seed, i), chunk_index, size, spec.node_shape(i))
        for i in range(spec.n_sites)
    ]


def sample_tensor_params(spec: MpsSpec, prior: PriorSpec, seed) -> TensorParams:
    """One draw of every node; equals member 0 of any ensemble with this seed."""
    nodes = sample_tensor_chunk(spec, prior, seed, 0, 1)
    return TensorParams(tuple(n[0] for n in nodes))


def sample_neural_weights(shape, sigma, seed, count=None):
    """I.i.d. ``N(0, sigma**2)`` weights.

    With ``count`` the result has a leading sample axis of that length.
    """
    if sigma < 0 or not math.isfinite(sigma):
        raise UsageError(f"sigma must be finite and nonnegative, got {sigma}")
    seed = as_seed(seed)
    if count is None:
        return sigma * standard_normal_chunk(seed, 0, 1, shape)[0]
    return sigma * standard_normal_block(seed, count, shape)
