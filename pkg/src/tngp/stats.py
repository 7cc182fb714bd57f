"""Empirical checks of Gaussian convergence for sampled networks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from .errors import DegenerateSampleError, UsageError
from .network import Model, sample_responses
from .priors import as_seed

SWEEP_AXES = ("n_sites", "bond_dim", "phys_dim", "output_dim")
MIN_SWEEP_SAMPLES = 1000
MIN_KS_SAMPLES = 20
N_PROJECTIONS = 10
OVERFLOW_FLAG_FRACTION = 0.01

ESTIMATOR_NOTE = (
    "skewness: adjusted Fisher-Pearson (scipy.stats.skew, bias=False); "
    "excess kurtosis: bias-corrected Fisher (scipy.stats.kurtosis, bias=False); "
    "ks: sup |F_n - Phi| after standardizing by sample mean and std (ddof=1)"
)


def ks_normality(samples):
    """KS distance between standardized samples and the standard normal."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_KS_SAMPLES:
        raise DegenerateSampleError(f"need at least {MIN_KS_SAMPLES} samples, got {x.size}")
    std = np.std(x, ddof=1)
    if not std > 0:
        raise DegenerateSampleError("samples have zero variance")
    z = (x - np.mean(x)) / std
    return float(stats.kstest(z, "norm").statistic)


@dataclass
class WidthRecord:
    width: int
    samples: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    ks: float
    overflow_fraction: float
    flagged: bool
    projection_ks: List[float] = field(default_factory=list)


@dataclass
class EnsembleReport:
    model_kind: str
    axis: str
    seed: int
    points: list
    records: List[WidthRecord]
    estimator_note: str = ESTIMATOR_NOTE

    def to_dict(self):
        return asdict(self)

    @property
    def ks_values(self):
        return [r.ks for r in self.records]


def model_at_width(model, axis, width):
    """Copy of ``model`` with one width parameter replaced."""
    if axis not in SWEEP_AXES:
        raise UsageError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if axis == "output_dim" and model.kind != "mps_hidden_nn":
        raise UsageError("output_dim sweeps apply to mps_hidden_nn only")
    if axis == "phys_dim" and model.feature.kind != "neural_kernel":
        raise UsageError("phys_dim sweeps need the neural_kernel feature map")
    changes = {axis: int(width)}
    if axis == "n_sites" and model.spec.has_output:
        changes["output_site"] = min(model.spec.output_site, int(width) - 1)
    return model.with_spec(**changes)


def _record(width, values, requested, projections):
    finite = np.isfinite(values)
    kept = values[finite]
    frac = 1.0 - kept.size / requested
    return WidthRecord(
        width=int(width),
        samples=int(kept.size),
        mean=float(np.mean(kept)),
        std=float(np.std(kept, ddof=1)),
        skewness=float(stats.skew(kept, bias=False)),
        excess_kurtosis=float(stats.kurtosis(kept, fisher=True, bias=False)),
        ks=ks_normality(kept),
        overflow_fraction=float(frac),
        flagged=bool(frac > OVERFLOW_FLAG_FRACTION),
        projection_ks=projections,
    )


def projection_ks(values, seed, count=N_PROJECTIONS):
    """KS normality of random 1-D projections of joint samples ``(m, P)``."""
    values = values[np.all(np.isfinite(values), axis=1)]
    if values.shape[1] < 2:
        return []
    rng = as_seed(seed).child("projections").generator()
    directions = rng.standard_normal((count, values.shape[1]))
    return [ks_normality(values @ t) for t in directions]


def width_sweep(model: Model, axis, widths, points, m, seed) -> EnsembleReport:
    """Sample ``m`` networks per width and summarize ``psi`` at ``points[0]``.

    Each width draws from its own labelled stream.  When more than one point
    is given, joint Gaussianity is probed with random projections across the
    points.  Widths whose overflow fraction exceeds 1% are flagged and the
    sweep carries on.
    """
    widths = [int(w) for w in widths]
    if not widths or any(b <= a for a, b in zip(widths, widths[1:])):
        raise UsageError("widths must be nonempty and strictly increasing")
    if m < MIN_SWEEP_SAMPLES:
        raise UsageError(f"m must be at least {MIN_SWEEP_SAMPLES}")
    points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if not points:
        raise UsageError("need at least one evaluation point")
    seed = as_seed(seed)
    records = []
    for w in widths:
        wmodel = model_at_width(model, axis, w)
        values = sample_responses(wmodel, points, m, seed.child("width", w))
        records.append(_record(w, values[:, 0], m, projection_ks(values, seed.child("width", w))))
    return EnsembleReport(model.kind, axis, seed.root,
                          [p.tolist() for p in points], records)


def empirical_corr(model, x, xp, m, seed):
    """Pearson correlation of ``psi(x)`` and ``psi(x')`` across sampled networks."""
    if m < MIN_SWEEP_SAMPLES:
        raise UsageError(f"m must be at least {MIN_SWEEP_SAMPLES}")
    values = sample_responses(model, [x, xp], m, seed)
    values = values[np.all(np.isfinite(values), axis=1)]
    a = values[:, 0] - values[:, 0].mean()
    b = values[:, 1] - values[:, 1].mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0 or sbb == 0:
        raise DegenerateSampleError("zero variance at one of the points")
    rho = float(a @ b) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, rho))
