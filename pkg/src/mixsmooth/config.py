"""Experiment configuration: a sectioned TOML file, one file per run.

Every section is validated before any computation starts. Unknown keys are
rejected, and all failures are reported together with their key paths::

    [model]
    type = "ar1_density"
    rho = 0.5

    [kernel]
    family = "epanechnikov"
    order = 2

    [bandwidth]        # h(n) = constant * n^(-1/(2r+d)), swept over [c_lo, c_hi] * h(n)
    c_lo = 0.5
    c_hi = 2.0
    count = 5

    [eval]
    radius = 2.0
    points = 41

    [experiment]
    target = "density"
    n_grid = [1000, 2000, 4000]
    replications = 20
    seed = 1
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .kernels import make_kernel
from .processes import (
    IID,
    REGRESSION_FUNCTIONS,
    Ar1Density,
    GaussianCes,
    Geometric,
    Polynomial,
    RegressionOnAr1,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SUBCOMMANDS = ("simulate", "validate-kernel", "estimate", "ces", "rate-check", "theory-check")

DEFAULT_ANGLES = [k * math.pi / 4 for k in range(8)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    type: Literal["ar1_density", "regression_on_ar1", "gaussian_ces"]
    rho: float
    sigma: float = Field(1.0, gt=0)
    m_fn: str = "sin"
    sigma_u: float = Field(0.5, gt=0)
    sigma_l: float = Field(1.0, gt=0)
    loadings: list[float] = [1.0, 0.5]
    design: list[float] = [1.0, 1.0]

    @field_validator("rho")
    @classmethod
    def _stationary(cls, v):
        if not abs(v) < 1.0:
            raise ValueError(f"nonstationary model: AR(1) coefficient needs |rho| < 1, got {v}")
        return v

    @field_validator("m_fn")
    @classmethod
    def _known_fn(cls, v):
        if v not in REGRESSION_FUNCTIONS:
            raise ValueError(f"unknown function {v!r}; choose one of {sorted(REGRESSION_FUNCTIONS)}")
        return v

    def build(self):
        if self.type == "ar1_density":
            return Ar1Density(self.rho, self.sigma)
        if self.type == "regression_on_ar1":
            return RegressionOnAr1(self.rho, self.sigma, self.m_fn, self.sigma_u)
        return GaussianCes(
            self.rho, self.sigma, self.m_fn, self.sigma_l, tuple(self.loadings), tuple(self.design)
        )


class KernelSection(_Section):
    family: Literal["epanechnikov", "gaussian"] = "epanechnikov"
    order: int = 2

    @model_validator(mode="after")
    def _supported(self):
        allowed = {"epanechnikov": (2,), "gaussian": (2, 4, 6)}[self.family]
        if self.order not in allowed:
            raise ValueError(
                f"unsupported order {self.order} for {self.family} kernel; available: {list(allowed)}"
            )
        return self

    def build(self):
        return make_kernel(self.family, self.order)


class BandwidthSection(_Section):
    """Either a rate rule (constant, c_lo, c_hi) or a fixed interval (a_n, b_n)."""

    constant: float = Field(1.0, gt=0)
    c_lo: float = Field(0.5, gt=0)
    c_hi: float = Field(2.0, gt=0)
    a_n: Optional[float] = Field(None, gt=0)
    b_n: Optional[float] = Field(None, gt=0)
    count: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.c_lo > self.c_hi:
            raise ValueError("c_lo must not exceed c_hi")
        if (self.a_n is None) != (self.b_n is None):
            raise ValueError("a_n and b_n must be given together")
        if self.a_n is not None and self.a_n > self.b_n:
            raise ValueError("a_n must not exceed b_n")
        lo, hi = (self.a_n, self.b_n) if self.a_n is not None else (self.c_lo, self.c_hi)
        if self.count == 1 and lo != hi:
            raise ValueError("count = 1 requires a degenerate interval")
        if self.count > 1 and lo == hi:
            raise ValueError("count > 1 requires a non-degenerate interval")
        return self


class EvalSection(_Section):
    radius: float = Field(2.0, gt=0)
    points: int = Field(41, ge=1)


class IndexSection(_Section):
    a_angles: list[float] = DEFAULT_ANGLES
    b_vectors: list[list[float]] = [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.8, 0.4], [0.3, 0.6]]
    p_levels: list[Annotated[float, Field(gt=0, lt=1)]] = [0.1, 0.05]
    c_values: list[float] = []

    @field_validator("b_vectors")
    @classmethod
    def _nonempty(cls, v):
        if not v or any(len(b) == 0 for b in v):
            raise ValueError("b_vectors must be a non-empty list of non-empty vectors")
        if len({len(b) for b in v}) != 1:
            raise ValueError("all b_vectors must have the same length")
        return v


class ExperimentSection(_Section):
    target: Literal["density", "regression", "ces"] = "density"
    n_grid: list[Annotated[int, Field(ge=2)]]
    replications: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    trim_tau: float = Field(1e-3, gt=0)

    @field_validator("n_grid")
    @classmethod
    def _increasing(cls, v):
        if len(v) < 2 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid needs at least two strictly increasing sizes")
        return v


class SimulateSection(_Section):
    path: str
    n: int = Field(ge=1)
    seed: int = Field(0, ge=0)
    burnin: int = Field(0, ge=0)


class DataSection(_Section):
    path: str
    q: int = Field(ge=1)
    p: int = Field(ge=1)


class ValidationSection(_Section):
    quad_tol: float = Field(1e-8, gt=0)
    order: Optional[int] = Field(None, ge=2)


class RawPhi(_Section):
    kind: Literal["raw"]
    j: int = Field(ge=0)


class ConstantPhi(_Section):
    kind: Literal["constant"]
    value: float


class ShortfallPhi(_Section):
    kind: Literal["shortfall_numerator", "shortfall_indicator"]
    a: list[float]
    c: float


PhiEntry = Annotated[Union[RawPhi, ConstantPhi, ShortfallPhi], Field(discriminator="kind")]


class IdentityMap(_Section):
    kind: Literal["identity"]


class SingleIndexMap(_Section):
    kind: Literal["single_index"]
    b: list[float]


class CoordinatesMap(_Section):
    kind: Literal["coordinates"]
    indices: list[int]


WMapEntry = Annotated[Union[IdentityMap, SingleIndexMap, CoordinatesMap], Field(discriminator="kind")]


class EstimateSection(_Section):
    quantity: Literal["T", "f", "m"] = "m"
    trim_tau: float = Field(1e-3, gt=0)
    phi: list[PhiEntry] = [RawPhi(kind="raw", j=0)]
    w_maps: list[WMapEntry] = [IdentityMap(kind="identity")]


class CesSection(_Section):
    trim_tau: float = Field(1e-3, gt=0)


class BiasSection(_Section):
    target_sd: float = Field(math.sqrt(4.0 / 3.0), gt=0)
    w: float = 0.0
    h_grid: list[Annotated[float, Field(gt=0)]] = [0.4, 0.2, 0.1, 0.05]
    quad_tol: float = Field(1e-13, gt=0)


class NormSection(_Section):
    mixing: Literal["iid", "geometric", "polynomial"] = "geometric"
    rho: float = Field(0.5, gt=0, lt=1)
    b_exp: float = 3.0
    scale: float = Field(1.0, gt=0, le=1)
    delta: float = 4.0
    density_bound: float = Field(0.5, gt=0)
    h_grid: list[Annotated[float, Field(gt=0)]] = [0.4, 0.2, 0.1, 0.05, 0.02]
    tail: Literal["markov", "level_set"] = "markov"
    quad_points: int = Field(16, ge=2)

    def build(self):
        if self.mixing == "iid":
            return IID(self.delta)
        if self.mixing == "geometric":
            return Geometric(self.rho, self.delta)
        return Polynomial(self.b_exp, self.scale, self.delta)

    @model_validator(mode="after")
    def _admissible(self):
        self.build()
        return self


class OutputSection(_Section):
    path: str = "report.json"
    summary: Optional[str] = None


class ExperimentConfig(_Section):
    model: Optional[ModelSection] = None
    kernel: Optional[KernelSection] = None
    bandwidth: Optional[BandwidthSection] = None
    eval: Optional[EvalSection] = None
    index: Optional[IndexSection] = None
    experiment: Optional[ExperimentSection] = None
    simulate: Optional[SimulateSection] = None
    data: Optional[DataSection] = None
    validation: Optional[ValidationSection] = None
    estimate: Optional[EstimateSection] = None
    ces: Optional[CesSection] = None
    bias: Optional[BiasSection] = None
    norm: Optional[NormSection] = None
    output: OutputSection = OutputSection()

    def echo(self) -> dict:
        """The fully resolved configuration, defaults included."""
        return self.model_dump(mode="json", exclude_none=True)


# Sections each subcommand needs; missing optional ones are filled with defaults.
REQUIRED = {
    "simulate": ("model", "simulate"),
    "validate-kernel": ("kernel",),
    "estimate": ("data", "kernel", "bandwidth", "eval"),
    "ces": ("data", "kernel", "bandwidth", "eval"),
    "rate-check": ("model", "kernel", "experiment"),
    "theory-check": ("kernel",),
}
DEFAULTED = {
    "simulate": (),
    "validate-kernel": ("validation",),
    "estimate": ("estimate",),
    "ces": ("index", "ces"),
    "rate-check": ("bandwidth", "eval", "index"),
    "theory-check": ("bias", "norm"),
}


def _fmt(err) -> str:
    loc = ".".join(str(part) for part in err["loc"]) or "<root>"
    msg = err["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{loc}: {msg}"


def config_from_dict(raw: dict, subcommand: str | None = None) -> ExperimentConfig:
    problems = []
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        problems.extend(_fmt(e) for e in exc.errors())
        cfg = None
    if subcommand is not None:
        if subcommand not in SUBCOMMANDS:
            problems.append(f"<root>: unknown subcommand {subcommand!r}")
        else:
            for name in REQUIRED[subcommand]:
                if name not in raw:
                    problems.append(f"{name}: section required by {subcommand}")
    if problems:
        raise ConfigError(problems)
    if subcommand is not None:
        fills = {}
        for name in DEFAULTED[subcommand]:
            if getattr(cfg, name) is None:
                fills[name] = ExperimentConfig.model_fields[name].annotation.__args__[0]()
        if fills:
            cfg = cfg.model_copy(update=fills)
        _cross_check(cfg, subcommand)
    return cfg


def _cross_check(cfg: ExperimentConfig, subcommand: str) -> None:
    problems = []
    if subcommand == "rate-check":
        target = cfg.experiment.target
        want = {"density": "ar1_density", "regression": "regression_on_ar1", "ces": "gaussian_ces"}[target]
        if cfg.model.type != want:
            problems.append(f"model.type: target {target!r} needs model type {want!r}")
        if cfg.bandwidth.a_n is not None:
            problems.append("bandwidth.a_n: rate experiments use the constant/c_lo/c_hi rule")
        if target == "ces":
            p = len(cfg.model.design)
            if any(len(b) != p for b in cfg.index.b_vectors):
                problems.append(f"index.b_vectors: vectors must have length p={p}")
            if len(cfg.model.loadings) != 2:
                problems.append("model.loadings: angle grids need q = 2")
    if subcommand in ("estimate", "ces") and cfg.bandwidth.a_n is None:
        problems.append("bandwidth.a_n: data subcommands need an explicit [a_n, b_n] interval")
    if subcommand == "ces":
        if cfg.data.q != 2:
            problems.append("data.q: angle grids need q = 2")
        if any(len(b) != cfg.data.p for b in cfg.index.b_vectors):
            problems.append(f"index.b_vectors: vectors must have length p={cfg.data.p}")
    if problems:
        raise ConfigError(problems)


def parse_config(path, subcommand: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc}"]) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"<file>: {path} is not valid TOML: {exc}"]) from None
    return config_from_dict(raw, subcommand)
