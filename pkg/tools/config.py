"""
Experiment configuration schema.

One JSON file describes one run. Every section has defaults, so running a
subcommand without a file runs its default experiment. Unknown keys are
rejected; density parameters are checked by building the density during
validation, so a bad covariance is reported with its field path.
"""

import json
import logging
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from . import densities
from .crossval import read_samples
from .densities import Density
from .errors import ConfigError
from .kernels import kernel_by_name, profile_by_name
from .numerics import MonteCarloConfig, QuadratureConfig
from .scores import ScoringRule, blend_rule, hyvarinen_rule, kernel_rule, log_rule, radial_rule

logger = logging.getLogger(__name__)

EXPERIMENTS = ("score-eval", "divergence-table", "sure-experiment", "bandwidth", "check-suite")

Matrix = List[List[float]]
Covariance = Union[float, Matrix]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------- Densities ----------------

class _DensitySpec(_Spec):
    @model_validator(mode="after")
    def _buildable(self):
        # DensityError is a ValueError, so pydantic reports it against this model
        self.build()
        return self

    def build(self) -> Density:
        raise NotImplementedError


class GaussianSpec(_DensitySpec):
    family: Literal["gaussian"] = "gaussian"
    mean: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    cov: Optional[Covariance] = Field(default=None, description="Scalar (times I) or full matrix; identity if omitted")

    def build(self):
        return densities.gaussian(self.mean, self.cov)


class GaussianMixtureSpec(_DensitySpec):
    family: Literal["gaussian_mixture"] = "gaussian_mixture"
    weights: List[float] = Field(default_factory=lambda: [0.5, 0.5], min_length=1)
    means: List[List[float]] = Field(default_factory=lambda: [[-1.0], [1.0]], min_length=1)
    covs: List[Covariance] = Field(default_factory=lambda: [1.0, 1.0], min_length=1)

    def build(self):
        return densities.gaussian_mixture(self.weights, self.means, self.covs)


class LogisticProductSpec(_DensitySpec):
    family: Literal["logistic_product"] = "logistic_product"
    locations: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    scales: List[float] = Field(default_factory=lambda: [1.0], min_length=1)

    def build(self):
        return densities.logistic_product(self.locations, self.scales)


class KdeSpec(_DensitySpec):
    family: Literal["kde"] = "kde"
    bandwidth: float = Field(gt=0)
    points: Optional[Matrix] = None
    samples_path: Optional[str] = Field(default=None, description="Comma-separated sample file, one point per line")

    @model_validator(mode="before")
    @classmethod
    def _one_source(cls, data):
        if isinstance(data, dict) and (data.get("points") is None) == (data.get("samples_path") is None):
            raise ValueError("kde needs exactly one of 'points' or 'samples_path'")
        return data

    def build(self):
        points = read_samples(self.samples_path) if self.samples_path else self.points
        return densities.kde(points, self.bandwidth)


class MixturePathSpec(_DensitySpec):
    family: Literal["mixture_path"] = "mixture_path"
    q: "DensitySpec"
    p: "DensitySpec"
    t: float = Field(ge=0.0, le=1.0)

    def build(self):
        return densities.mixture_path(self.q.build(), self.p.build(), self.t)


DensitySpec = Annotated[
    Union[GaussianSpec, GaussianMixtureSpec, LogisticProductSpec, KdeSpec, MixturePathSpec],
    Field(discriminator="family"),
]
MixturePathSpec.model_rebuild()


def standard_normal(dim: int = 1) -> GaussianSpec:
    return GaussianSpec(mean=[0.0] * dim)


# ---------------- Rules and engines ----------------

KernelName = Literal["hyvarinen", "logcosh", "convex_quadratic", "zero"]


class RuleSpec(_Spec):
    """A scoring rule; ``kernel`` and ``scale`` apply to radial and general kinds."""

    kind: Literal["hyvarinen", "radial", "general", "logarithmic", "blend"] = "hyvarinen"
    kernel: KernelName = "hyvarinen"
    scale: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=0.5, ge=0.0, le=1.0, description="Weight of the log score in a blend")
    base: Literal["hyvarinen", "radial", "general"] = Field(default="radial", description="Kernel rule inside a blend")

    def _kernel_rule(self, kind: str, dim: int) -> ScoringRule:
        if kind == "hyvarinen":
            return hyvarinen_rule()
        if kind == "radial":
            return radial_rule(profile_by_name(self.kernel, self.scale))
        return kernel_rule(kernel_by_name(self.kernel, dim, self.scale))

    def build(self, dim: int) -> ScoringRule:
        if self.kind == "logarithmic":
            return log_rule()
        if self.kind == "blend":
            return blend_rule(self.alpha, self._kernel_rule(self.base, dim))
        return self._kernel_rule(self.kind, dim)


EngineSpec = Annotated[Union[QuadratureConfig, MonteCarloConfig], Field(discriminator="engine")]


# ---------------- Experiments ----------------

class _ExperimentConfig(_Spec):
    seed: int = Field(default=0, ge=0)
    out: Optional[str] = Field(default=None, description="CSV output path")


class ScoreEvalConfig(_ExperimentConfig):
    experiment: Literal["score-eval"] = "score-eval"
    density: DensitySpec = Field(default_factory=standard_normal)
    rules: List[RuleSpec] = Field(default_factory=lambda: [
        RuleSpec(kind="hyvarinen"),
        RuleSpec(kind="radial", kernel="logcosh"),
        RuleSpec(kind="general", kernel="logcosh"),
        RuleSpec(kind="logarithmic"),
    ], min_length=1)
    points: Matrix = Field(default_factory=lambda: [[0.0], [1.0], [3.0]], min_length=1)

    @model_validator(mode="after")
    def _points_match_density(self):
        dim = self.density.build().dim
        for i, point in enumerate(self.points):
            if len(point) != dim:
                raise ValueError(f"points[{i}] has {len(point)} coordinates, density has d={dim}")
        return self


class DensityPair(_Spec):
    p: DensitySpec
    q: DensitySpec

    @model_validator(mode="after")
    def _same_dimension(self):
        if self.p.build().dim != self.q.build().dim:
            raise ValueError("p and q must have the same dimension")
        return self


def _default_pairs() -> List[DensityPair]:
    return [
        DensityPair(p=GaussianSpec(mean=[1.0]), q=GaussianSpec(mean=[0.0])),
        DensityPair(p=GaussianSpec(mean=[0.0], cov=2.0), q=GaussianSpec(mean=[0.0])),
        DensityPair(p=GaussianMixtureSpec(), q=GaussianSpec(mean=[0.0])),
    ]


class DivergenceTableConfig(_ExperimentConfig):
    experiment: Literal["divergence-table"] = "divergence-table"
    pairs: List[DensityPair] = Field(default_factory=_default_pairs, min_length=1)
    kernels: List[KernelName] = Field(default_factory=lambda: ["hyvarinen", "logcosh"], min_length=1)
    routes: List[Literal["expected-score", "integrand", "closed-form"]] = Field(
        default_factory=lambda: ["expected-score", "integrand", "closed-form"], min_length=1)
    scale: float = Field(default=1.0, gt=0)
    engine: EngineSpec = Field(default_factory=QuadratureConfig)
    k_sigma: float = Field(default=5.0, gt=0)


class SureExperimentConfig(_ExperimentConfig):
    experiment: Literal["sure-experiment"] = "sure-experiment"
    estimator: Literal["posterior_mean", "identity", "zero", "shrinkage"] = "posterior_mean"
    prior: DensitySpec = Field(default_factory=standard_normal, description="Prior on theta (posterior_mean only)")
    marginal: Optional[DensitySpec] = Field(default=None, description="Marginal of x; overrides the prior")
    shrinkage: float = Field(default=0.5, description="c in T = (1 - c) x")
    dim: int = Field(default=1, ge=1, description="Dimension for estimators without a prior")
    thetas: List[List[float]] = Field(default_factory=lambda: [[0.0]], min_length=1)
    samples: int = Field(default=1_000_000, ge=2)
    threads: int = Field(default=1, ge=1)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    k_sigma: float = Field(default=5.0, gt=0)


def _default_grid() -> List[float]:
    return [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.75, 1.0, 1.25, 1.5, 2.0]


class BandwidthConfig(_ExperimentConfig):
    experiment: Literal["bandwidth"] = "bandwidth"
    rule: RuleSpec = Field(default_factory=RuleSpec)
    samples_path: Optional[str] = Field(default=None, description="Sample file; drawn from true_density if omitted")
    true_density: Optional[DensitySpec] = Field(default_factory=standard_normal)
    n: int = Field(default=200, ge=2, description="Sample size when drawing from true_density")
    grid: List[float] = Field(default_factory=_default_grid, min_length=1)
    engine: EngineSpec = Field(default_factory=QuadratureConfig)
    replications: int = Field(default=0, ge=0, description="Replication check count; 0 skips it")
    replication_n: int = Field(default=50, ge=2)
    replication_bandwidth: float = Field(default=0.5, gt=0)
    k_sigma: float = Field(default=5.0, gt=0)

    @field_validator("samples_path")
    @classmethod
    def _readable_samples(cls, path):
        if path is not None:
            read_samples(path)
        return path

    @model_validator(mode="after")
    def _has_samples(self):
        if self.samples_path is None and self.true_density is None:
            raise ValueError("bandwidth selection needs samples_path or true_density")
        if self.replications and self.true_density is None:
            raise ValueError("the replication check needs true_density")
        return self


class CheckSuiteConfig(_ExperimentConfig):
    experiment: Literal["check-suite"] = "check-suite"
    profile: Literal["quick", "full"] = "quick"
    threads: int = Field(default=1, ge=1)
    checks: Optional[List[str]] = Field(default=None, description="Subset of checks to run; all if omitted")

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, names):
        from .experiments import CHECKS

        unknown = [n for n in names or [] if n not in CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; known checks: {sorted(CHECKS)}")
        return names


ExperimentConfig = Annotated[
    Union[ScoreEvalConfig, DivergenceTableConfig, SureExperimentConfig, BandwidthConfig, CheckSuiteConfig],
    Field(discriminator="experiment"),
]

_ADAPTER = TypeAdapter(ExperimentConfig)


def _field_of(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def parse_config(data: dict, experiment: Optional[str] = None):
    """Validate a config mapping; ``experiment`` fills in or must match the kind."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", field="<root>")
    data = dict(data)
    if experiment is not None:
        given = data.setdefault("experiment", experiment)
        if given != experiment:
            raise ConfigError(f"config is for '{given}', not '{experiment}'", field="experiment")
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as exc:
        field = _field_of(exc)
        raise ConfigError(f"invalid value for '{field}': {exc.errors()[0]['msg']}", field=field) from exc


def load_config(path: Union[str, Path, None], experiment: Optional[str] = None):
    """Read and validate a JSON config; no path means the default for ``experiment``."""
    if path is None:
        if experiment is None:
            raise ConfigError("no config file and no experiment given", field="experiment")
        return parse_config({}, experiment)
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", field="--config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})", field="--config") from exc
    logger.debug("loaded config %s", path)
    return parse_config(data, experiment)


def with_overrides(config, seed: Optional[int] = None, threads: Optional[int] = None, out: Optional[str] = None):
    """Apply command-line overrides, including Monte Carlo engine seeds and thread counts."""
    update = {}
    if seed is not None:
        update["seed"] = seed
    if out is not None:
        update["out"] = out
    if threads is not None and "threads" in type(config).model_fields:
        update["threads"] = threads
    engine = getattr(config, "engine", None)
    if isinstance(engine, MonteCarloConfig):
        engine_update = {}
        if seed is not None:
            engine_update["seed"] = seed
        if threads is not None:
            engine_update["threads"] = threads
        if engine_update:
            update["engine"] = engine.model_copy(update=engine_update)
    return config.model_copy(update=update) if update else config