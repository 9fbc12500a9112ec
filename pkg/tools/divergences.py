"""
Divergences induced by local scoring rules, with q as the integrating measure.

d_S(p, q) = S(p, q) - S(q, q) is computed two ways: as an expected-score
difference, and as the expectation of the pointwise integrand

    k(x, sigma_p) - k(x, sigma_q) + <sigma_q - sigma_p, grad_y k(x, sigma_p)>,

which is nonnegative for kernels concave in y. Agreement of the two routes is
the partial-integration identity behind the integrand form.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .densities import Density
from .errors import DensityError, ScoreError
from .kernels import Kernel, radial_kernel
from .numerics import EngineConfig, ExpectationResult, as_points, expect
from .scores import ScoringRule, general_terms, local_jet

logger = logging.getLogger(__name__)

METHODS = ("expected-score", "integrand", "closed-form")


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    error: float
    method: str
    engine: str
    config: Dict = field(default_factory=dict)
    p: str = ""
    q: str = ""
    label: str = ""

    @classmethod
    def from_expectation(cls, result: ExpectationResult, method: str, p: Density, q: Density, label: str = ""):
        return cls(
            value=result.value,
            error=result.error,
            method=method,
            engine=result.engine,
            config=result.config,
            p=p.describe(),
            q=q.describe(),
            label=label,
        )

    @property
    def expectation(self) -> ExpectationResult:
        return ExpectationResult(self.value, self.error, self.engine, self.config)

    def tolerance(self, k_sigma: float = 5.0) -> float:
        return self.expectation.tolerance(k_sigma)

    def to_dict(self) -> Dict:
        return {
            "p": self.p,
            "q": self.q,
            "kernel": self.label,
            "route": self.method,
            "value": self.value,
            "error": self.error,
            "engine": self.engine,
        }


def _check_pair(p: Density, q: Density) -> None:
    if p.dim != q.dim:
        raise DensityError(f"densities live in different dimensions: {p.describe()} (d={p.dim}) vs {q.describe()} (d={q.dim})")


def rule_kernel(rule: ScoringRule, dim: int) -> Kernel:
    """The kernel a kernel-based rule is built from."""
    if rule.kind == "general":
        return rule.kernel
    if rule.kind in ("radial", "hyvarinen"):
        return radial_kernel(rule.profile, dim)
    raise ScoreError(f"rule '{rule.name}' is not built from a kernel")


# ---------------- Expected scores ----------------

def expected_score(rule: ScoringRule, p: Density, q: Density, engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """S(p, q) = E_q S(p, .)."""
    _check_pair(p, q)

    def integrand(points):
        return rule.evaluate_local(points, local_jet(p, points))

    return expect(integrand, q, engine)


def bregman_divergence(rule: ScoringRule, p: Density, q: Density, engine: Optional[EngineConfig] = None) -> DivergenceResult:
    """
    d_S(p, q) = S(p, q) - S(q, q).

    Both scores are taken at the same nodes (or draws) in one integrand, so
    Monte Carlo noise common to both cancels and p = q gives exactly 0.
    """
    _check_pair(p, q)

    def integrand(points):
        return (rule.evaluate_local(points, local_jet(p, points))
                - rule.evaluate_local(points, local_jet(q, points)))

    result = expect(integrand, q, engine)
    return DivergenceResult.from_expectation(result, "expected-score", p, q, rule.name)


# ---------------- Integrand route ----------------

def _integrand_terms(kernel: Kernel, points: np.ndarray, sigma_p: np.ndarray, sigma_q: np.ndarray) -> np.ndarray:
    at_p = kernel._evaluate(points, sigma_p)
    at_q = kernel._evaluate(points, sigma_q)
    return at_p.value - at_q.value + np.einsum("ni,ni->n", sigma_q - sigma_p, at_p.grad_y)


def divergence_integrand(kernel: Kernel, p: Density, q: Density, x):
    """k(x, sigma_p) - k(x, sigma_q) + <sigma_q - sigma_p, grad_y k(x, sigma_p)>."""
    _check_pair(p, q)
    points, single = as_points(x, p.dim)
    values = _integrand_terms(kernel, points, local_jet(p, points).grad, local_jet(q, points).grad)
    return float(values[0]) if single else values


def divergence_via_integrand(kernel: Kernel, p: Density, q: Density,
                            engine: Optional[EngineConfig] = None) -> DivergenceResult:
    """E_q of the pointwise integrand; equals d_S for the rule built from ``kernel``."""
    _check_pair(p, q)

    def integrand(points):
        return _integrand_terms(kernel, points, local_jet(p, points).grad, local_jet(q, points).grad)

    result = expect(integrand, q, engine)
    return DivergenceResult.from_expectation(result, "integrand", p, q, kernel.name)


def hyvarinen_divergence(p: Density, q: Density, engine: Optional[EngineConfig] = None) -> DivergenceResult:
    """E_q |grad log p - grad log q|^2."""
    _check_pair(p, q)

    def integrand(points):
        gap = local_jet(p, points).grad - local_jet(q, points).grad
        return np.einsum("ni,ni->n", gap, gap)

    result = expect(integrand, q, engine)
    return DivergenceResult.from_expectation(result, "closed-form", p, q, "hyvarinen")


def zero_mean_diagnostic(kernel: Kernel, q: Density, engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """
    E_q[ q^-1 div(q grad_y k(., grad log q)) ], which vanishes when the
    boundary terms of the partial integration do.

    The integrand equals k(x, sigma_q) - S(q, x) for the rule built from
    ``kernel``.
    """

    def integrand(points):
        jet = local_jet(q, points)
        value = kernel._evaluate(points, jet.grad).value
        return value - general_terms(kernel, points, jet)

    result = expect(integrand, q, engine)
    logger.debug("zero-mean diagnostic for %s under %s: %.3e +- %.3e",
                 kernel.name, q.describe(), result.value, result.error)
    return result
