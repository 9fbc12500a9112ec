"""
Stein unbiased risk estimation for shift estimators T(x) = x + g(x) in the
Gaussian model x ~ N(theta, I_d).

SURE(x) = 2 div g(x) + |g(x)|^2 + d is unbiased for E_theta |T - theta|^2
whenever g satisfies the usual weak differentiability and integrability
conditions of Stein's identity. A user-supplied g is trusted to satisfy them;
``unbiasedness_experiment`` checks the claim empirically.

For the posterior mean under a prior pi, g = grad log f with f the marginal of
x, SURE reduces to the Hyvarinen score of f plus d, and the risk equals the
Hyvarinen divergence of f from N(theta, I).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from .densities import Density, GaussianDensity, MixtureDensity
from .divergences import hyvarinen_divergence
from .errors import SureModelError
from .numerics import (
    MAX_QUADRATURE_DIM,
    EngineConfig,
    ExpectationResult,
    MonteCarloConfig,
    QuadratureConfig,
    as_points,
    expect_mc,
    expect_mc_many,
    fd_jacobian,
    relative_gap,
)
from .scores import hyvarinen_terms, local_jet

logger = logging.getLogger(__name__)

K_SIGMA = 5.0
# relative to the size of the compared means; paired terms can cancel to rounding
PAIRED_ROUNDING_FLOOR = 1e-12

VectorField = Callable[[np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray], np.ndarray]


# ---------------- Estimators ----------------

@dataclass(frozen=True)
class ShiftEstimator:
    """
    T(x) = x + g(x) on R^d.

    ``g`` maps an (n, d) array to (n, d); ``div_g`` maps (n, d) to (n,). Without
    ``div_g`` the divergence is taken by central differences and results are
    flagged approximate.
    """

    dim: int
    g: VectorField
    div_g: Optional[ScalarField] = None
    name: str = "shift"
    marginal: Optional[Density] = None

    def __post_init__(self):
        if self.dim < 1:
            raise SureModelError(f"estimator dimension must be positive, got {self.dim}")
        if self.marginal is not None and self.marginal.dim != self.dim:
            raise SureModelError(f"marginal has dimension {self.marginal.dim}, estimator {self.dim}")
        if self.div_g is None:
            logger.warning("estimator '%s' has no analytic divergence; SURE values are approximate", self.name)

    @property
    def approximate(self) -> bool:
        return self.div_g is None

    def shift(self, points: np.ndarray) -> np.ndarray:
        values = np.asarray(self.g(points), dtype=float).reshape(len(points), self.dim)
        _require_finite(values, points, f"g of estimator '{self.name}'")
        return values

    def divergence(self, points: np.ndarray) -> np.ndarray:
        if self.div_g is not None:
            values = np.asarray(self.div_g(points), dtype=float).reshape(len(points))
        else:
            values = fd_divergence(self.g, points)
        _require_finite(values, points, f"div g of estimator '{self.name}'")
        return values

    def estimate(self, x):
        points, single = as_points(x, self.dim)
        out = points + self.shift(points)
        return out[0] if single else out


def _require_finite(values: np.ndarray, points: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values.reshape(len(points), -1)).all(axis=1)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise SureModelError(f"non-finite {what} at x={points[index].tolist()}")


def fd_divergence(g: VectorField, points: np.ndarray) -> np.ndarray:
    """Trace of the central-difference Jacobian of g at each point."""
    return np.array([
        float(np.trace(fd_jacobian(lambda y: np.asarray(g(y.reshape(1, -1)), dtype=float).reshape(-1), point)))
        for point in points
    ])


def check_divergence(estimator: ShiftEstimator, points) -> float:
    """Largest relative gap between the analytic divergence and finite differences."""
    if estimator.div_g is None:
        raise SureModelError(f"estimator '{estimator.name}' has no analytic divergence to check")
    points, _ = as_points(points, estimator.dim)
    return relative_gap(fd_divergence(estimator.g, points), estimator.divergence(points))


def identity_estimator(dim: int) -> ShiftEstimator:
    """T = x."""
    return ShiftEstimator(dim, lambda x: np.zeros_like(x), lambda x: np.zeros(len(x)), name="identity")


def zero_estimator(dim: int) -> ShiftEstimator:
    """T = 0."""
    return ShiftEstimator(dim, lambda x: -x, lambda x: np.full(len(x), -float(dim)), name="zero")


def linear_shrinkage(dim: int, c: float) -> ShiftEstimator:
    """T = (1 - c) x."""
    return ShiftEstimator(dim, lambda x: -c * x, lambda x: np.full(len(x), -c * dim), name=f"shrink({c:g})")


def posterior_mean_estimator(f: Density) -> ShiftEstimator:
    """T = x + grad log f(x) for the marginal density f of x."""

    def g(points):
        return f._jet(points).grad

    def div_g(points):
        return np.trace(f._jet(points).hess, axis1=1, axis2=2)

    return ShiftEstimator(f.dim, g, div_g, name=f"posterior-mean[{f.describe()}]", marginal=f)


# ---------------- Model ----------------

def shift_model(theta, cov=None) -> GaussianDensity:
    """The sampling model N(theta, I_d); other covariances are rejected."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if cov is not None:
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(theta.size)
        if not np.array_equal(cov, np.eye(theta.size)):
            raise SureModelError("the SURE model is N(theta, I); a non-identity covariance is not supported")
    return GaussianDensity(theta, np.eye(theta.size))


def _convolved(component: Density) -> GaussianDensity:
    if not isinstance(component, GaussianDensity):
        raise SureModelError(f"prior component {component.describe()} is not Gaussian; no closed-form marginal")
    return GaussianDensity(component.mean, component.cov + np.eye(component.dim))


def prior_marginal(prior: Density) -> Density:
    """Marginal of x when theta ~ prior and x | theta ~ N(theta, I)."""
    if isinstance(prior, GaussianDensity):
        return _convolved(prior)
    if isinstance(prior, MixtureDensity):
        return MixtureDensity(prior.weights, [_convolved(c) for c in prior.components])
    raise SureModelError(f"no closed-form marginal for prior {prior.describe()}; pass the marginal directly")


# ---------------- Estimates ----------------

def _sure_terms(estimator: ShiftEstimator, points: np.ndarray) -> np.ndarray:
    g = estimator.shift(points)
    return 2.0 * estimator.divergence(points) + np.einsum("ni,ni->n", g, g) + estimator.dim


def _loss_terms(estimator: ShiftEstimator, theta: np.ndarray, points: np.ndarray) -> np.ndarray:
    error = points + estimator.shift(points) - theta
    return np.einsum("ni,ni->n", error, error)


def sure_estimate(estimator: ShiftEstimator, x):
    """2 div g(x) + |g(x)|^2 + d."""
    points, single = as_points(x, estimator.dim)
    values = _sure_terms(estimator, points)
    return float(values[0]) if single else values


def sure_log_form(f: Density, x):
    """2 laplacian log f(x) + |grad log f(x)|^2 + d."""
    points, single = as_points(x, f.dim)
    values = hyvarinen_terms(local_jet(f, points)) + f.dim
    return float(values[0]) if single else values


def _theta(theta, dim: int) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise SureModelError(f"theta has {theta.size} coordinates, estimator has d={dim}")
    return theta


def quadratic_risk_mc(estimator: ShiftEstimator, theta, n: int, seed: int = 0,
                      threads: int = 1) -> ExpectationResult:
    """Monte Carlo mean and standard error of |T(x) - theta|^2, x ~ N(theta, I)."""
    theta = _theta(theta, estimator.dim)
    if n < 2:
        raise SureModelError(f"risk estimation needs n >= 2 draws, got {n}")
    config = MonteCarloConfig(samples=n, seed=seed, threads=threads)
    return expect_mc(lambda points: _loss_terms(estimator, theta, points), shift_model(theta), config)


# ---------------- Unbiasedness ----------------

@dataclass(frozen=True)
class SureReport:
    estimator: str
    dim: int
    theta: List[float]
    n: int
    seed: int
    sure: ExpectationResult
    risk: ExpectationResult
    difference: ExpectationResult
    reference: Optional[ExpectationResult] = None
    approximate: bool = False
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> Dict:
        row = {
            "estimator": self.estimator,
            "d": self.dim,
            "theta": " ".join(f"{t:.17g}" for t in self.theta),
            "n": self.n,
            "seed": self.seed,
            "sure_mean": self.sure.value,
            "sure_stderr": self.sure.error,
            "risk_mean": self.risk.value,
            "risk_stderr": self.risk.error,
            "mean_difference": self.difference.value,
            "difference_stderr": self.difference.error,
            "d_hs": self.reference.value if self.reference else "",
            "d_hs_error": self.reference.error if self.reference else "",
            "d_hs_engine": self.reference.engine if self.reference else "",
            "approximate": self.approximate,
            "passed": self.passed,
        }
        return row


def _reference_engine(dim: int, n: int, seed: int, threads: int,
                      quadrature: Optional[QuadratureConfig]) -> EngineConfig:
    if dim <= MAX_QUADRATURE_DIM:
        return quadrature or QuadratureConfig()
    # independent stream from the paired draws
    return MonteCarloConfig(samples=n, seed=seed + 1, threads=threads)


def unbiasedness_experiment(estimator_or_f: Union[ShiftEstimator, Density], theta, n: int, seed: int = 0,
                            threads: int = 1, quadrature: Optional[QuadratureConfig] = None,
                            k_sigma: float = K_SIGMA) -> SureReport:
    """
    Paired Monte Carlo check that E SURE = E |T - theta|^2.

    Both quantities are recorded on the same draws; the test is on the mean of
    their difference. With a marginal f available (a density argument, or a
    posterior-mean estimator) both means are also compared with the
    Hyvarinen divergence of f from N(theta, I).
    """
    if isinstance(estimator_or_f, Density):
        estimator = posterior_mean_estimator(estimator_or_f)
    else:
        estimator = estimator_or_f
    theta = _theta(theta, estimator.dim)
    if n < 2:
        raise SureModelError(f"the unbiasedness experiment needs n >= 2 draws, got {n}")
    model = shift_model(theta)

    def sure_terms(points):
        return _sure_terms(estimator, points)

    def loss_terms(points):
        return _loss_terms(estimator, theta, points)

    def difference_terms(points):
        return sure_terms(points) - loss_terms(points)

    config = MonteCarloConfig(samples=n, seed=seed, threads=threads)
    paired = expect_mc_many({"sure": sure_terms, "risk": loss_terms, "difference": difference_terms}, model, config)
    sure, risk, diff = paired["sure"], paired["risk"], paired["difference"]

    floor = PAIRED_ROUNDING_FLOOR * max(1.0, abs(sure.value) + abs(risk.value))
    checks = {"mean_difference": abs(diff.value) <= k_sigma * diff.error + floor}
    reference = None
    if estimator.marginal is not None:
        engine = _reference_engine(estimator.dim, n, seed, threads, quadrature)
        divergence = hyvarinen_divergence(estimator.marginal, model, engine)
        reference = divergence.expectation
        slack = reference.tolerance(k_sigma)
        checks["sure_vs_d_hs"] = abs(sure.value - reference.value) <= k_sigma * sure.error + slack
        checks["risk_vs_d_hs"] = abs(risk.value - reference.value) <= k_sigma * risk.error + slack

    report = SureReport(
        estimator=estimator.name,
        dim=estimator.dim,
        theta=theta.tolist(),
        n=n,
        seed=seed,
        sure=sure,
        risk=risk,
        difference=diff,
        reference=reference,
        approximate=estimator.approximate,
        checks=checks,
    )
    logger.info("SURE experiment %s theta=%s: sure=%.6g risk=%.6g diff=%.3g+-%.3g passed=%s",
                estimator.name, theta.tolist(), sure.value, risk.value, diff.value, diff.error, report.passed)
    return report
