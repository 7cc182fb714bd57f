"""Run configuration for the command line.

Configs are JSON documents validated with pydantic; unknown keys anywhere
are rejected so typos fail loudly instead of silently falling back to a
default.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, TngpError
from .kernels import KernelFunction
from .mps import FeatureMap, MpsSpec
from .network import Model
from .priors import PriorSpec, Seed
from .stats import model_at_width

EXPERIMENTS = ("sample-paths", "gram", "fit-predict", "converge", "mc-check", "sigma-sweep")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    kind: Literal["pure_mps", "neural_kernel_mps", "mps_hidden_nn"] = "pure_mps"
    n_sites: int = Field(5, ge=1)
    bond_dim: int = Field(8, ge=1)
    phys_dim: int = Field(2, ge=1)
    boundary: Literal["periodic", "open"] = "periodic"
    output_dim: Optional[int] = Field(None, ge=1)
    output_site: Optional[int] = Field(None, ge=0)
    activation: Literal["erf", "tanh", "relu", "sigmoid", "identity"] = "tanh"


class FeatureConfig(_Strict):
    kind: Literal["linear_complement", "neural_kernel"] = "linear_complement"
    activation: Literal["erf", "tanh", "relu", "sigmoid", "identity"] = "erf"
    input_dim: int = Field(1, ge=1)
    check_domain: bool = True


class PriorConfig(_Strict):
    sigma_A: float = Field(1.0, gt=0)
    sigma_w_kernel: float = Field(1.0, ge=0)
    sigma_w_readout: float = Field(1.0, ge=0)
    sigma_b: float = Field(0.0, ge=0)
    scaling: Literal["fixed", "auto_alpha"] = "auto_alpha"
    readout_scaling: Literal["fixed", "one_over_L"] = "one_over_L"


class EstimatorConfig(_Strict):
    kind: Literal["analytic", "monte_carlo", "taylor"] = "analytic"
    mc_samples: int = Field(10_000, ge=100)
    prefactor_convention: Optional[Literal["paper_alpha_nm1", "trace_alpha_n"]] = None
    taylor_step: Optional[float] = Field(None, gt=0)


class GridConfig(_Strict):
    mode: Literal["slice", "diagonal", "2d"] = "slice"
    start: float = 0.0
    stop: float = 1.0
    steps: int = Field(50, ge=2)
    site: int = Field(0, ge=0)
    fixed: float = 0.5
    axes: List[int] = Field(default_factory=lambda: [0, 1])

    @field_validator("axes")
    @classmethod
    def _two_axes(cls, v):
        if len(v) != 2 or v[0] == v[1] or min(v) < 0:
            raise ValueError("axes must name two distinct coordinates")
        return v


class PathsConfig(_Strict):
    count: int = Field(4, ge=1)
    source: Literal["prior_forward", "gp", "both"] = "prior_forward"
    sigma_family: Optional[List[float]] = None

    @field_validator("sigma_family")
    @classmethod
    def _positive(cls, v):
        if v is not None and (not v or any(s <= 0 for s in v)):
            raise ValueError("sigma_family must be a nonempty list of positive values")
        return v


class ConvergeConfig(_Strict):
    axis: Literal["n_sites", "bond_dim", "phys_dim", "output_dim"] = "bond_dim"
    widths: List[int] = Field(default_factory=lambda: [2, 4, 8, 16])
    m: int = Field(10_000, ge=1000)
    points: Optional[List[List[float]]] = None

    @field_validator("widths")
    @classmethod
    def _increasing(cls, v):
        if not v or any(w < 1 for w in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("widths must be positive and strictly increasing")
        return v


class McCheckConfig(_Strict):
    pairs: Optional[List[List[List[float]]]] = None
    n_pairs: int = Field(10, ge=1)
    m: int = Field(100_000, ge=100)


class FitConfig(_Strict):
    data: str
    sigma_n: float = Field(0.0, ge=0)
    sigma_grid: Optional[List[float]] = None

    @field_validator("sigma_grid")
    @classmethod
    def _positive(cls, v):
        if v is not None and (not v or any(s <= 0 for s in v)):
            raise ValueError("sigma_grid must be a nonempty list of positive values")
        return v


class RunConfig(_Strict):
    experiment: Literal["sample-paths", "gram", "fit-predict", "converge", "mc-check", "sigma-sweep"]
    seed: int = Field(0, ge=0, lt=2**64)
    output: Optional[str] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    feature: FeatureConfig = Field(default_factory=FeatureConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    converge: ConvergeConfig = Field(default_factory=ConvergeConfig)
    mc_check: McCheckConfig = Field(default_factory=McCheckConfig)
    fit: Optional[FitConfig] = None

    @model_validator(mode="after")
    def _needs_data(self):
        if self.experiment in ("fit-predict", "sigma-sweep"):
            if self.fit is None:
                raise ValueError(f"experiment {self.experiment} needs a 'fit' section")
            if self.experiment == "sigma-sweep" and not self.fit.sigma_grid:
                raise ValueError("sigma-sweep needs fit.sigma_grid")
        return self

    def digest(self):
        payload = self.model_dump(mode="json", exclude={"output"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def build_model(self):
        m, f, p = self.model, self.feature, self.prior
        spec = MpsSpec(m.n_sites, m.bond_dim, m.phys_dim, m.boundary, m.output_dim, m.output_site)
        feature = FeatureMap(f.kind, f.activation, f.input_dim, None, f.check_domain)
        prior = PriorSpec(p.sigma_A, p.sigma_w_kernel, p.sigma_w_readout, p.sigma_b,
                          p.scaling, p.readout_scaling)
        return Model(m.kind, spec, prior, feature, m.activation)

    def build_kernel(self, model=None):
        e = self.estimator
        return KernelFunction(model or self.build_model(), e.kind, e.mc_samples,
                              Seed(self.seed).child("kernel_mc"), e.prefactor_convention,
                              e.taylor_step)


def _describe(err: ValidationError):
    parts = []
    for item in err.errors():
        loc = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{loc}: {item['msg']}")
    return "; ".join(parts)


def load_config(path, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if seed is not None:
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        raw["seed"] = seed
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config(raw, base_dir="."):
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_describe(exc)}") from None
    if cfg.fit is not None:
        data = cfg.fit.data
        if not os.path.isabs(data):
            data = os.path.join(base_dir, data)
        if not os.path.exists(data):
            raise ConfigError(f"fit.data: file not found: {cfg.fit.data}")
        cfg.fit.data = data
    try:
        model = cfg.build_model()
        if cfg.experiment in ("gram", "fit-predict", "sigma-sweep"):
            cfg.build_kernel(model)
        if cfg.experiment == "converge":
            for w in cfg.converge.widths:
                model_at_width(model, cfg.converge.axis, w)
    except TngpError as exc:
        raise ConfigError(f"invalid model: {exc}") from None
    length = model.input_length
    g = cfg.grid
    if g.mode == "slice" and g.site >= length:
        raise ConfigError(f"grid.site: {g.site} outside input of length {length}")
    if g.mode == "2d" and max(g.axes) >= length:
        raise ConfigError(f"grid.axes: {g.axes} outside input of length {length}")
    return cfg


def grid_points(cfg, model):
    """Input points along the configured grid and their grid coordinates.

    Returns ``(points, coords, coord_names)`` where ``coords`` has one row per
    point with the swept parameter(s).
    """
    g = cfg.grid
    length = model.input_length
    t = np.linspace(g.start, g.stop, g.steps)
    if g.mode == "2d":
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        coords = np.column_stack([t1.ravel(), t2.ravel()])
        points = []
        for a, b in coords:
            x = np.full(length, g.fixed)
            x[g.axes[0]], x[g.axes[1]] = a, b
            points.append(x)
        return points, coords, ["t1", "t2"]
    points = []
    for v in t:
        if g.mode == "diagonal":
            x = np.full(length, v)
        else:
            x = np.full(length, g.fixed)
            x[g.site] = v
        points.append(x)
    return points, t[:, None], ["t"]
