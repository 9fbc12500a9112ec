"""
Local scoring rules S(p, x).

Kernel-based rules depend on p only through sigma = grad log p(x) and
H = hess log p(x), so they never need the normalizing constant of p. For a
kernel k the rule is

    S(p, x) = k(x, sigma) - <sigma, grad_y k> - sum_i d2k/dx_i dy_i - tr(hess_y k . H),

i.e. k minus (1/p) div[p grad_y k(x, sigma(x))] expanded by the product rule.
The logarithmic score -log p(x) is the only rule that reads log p itself; it
enters as a baseline and as the partner of convex blends.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .densities import Density, LogDensityJet
from .errors import ScoreError
from .kernels import (
    RADIAL_EPSILON,
    Kernel,
    RadialProfile,
    concavity_probe,
    hyvarinen_profile,
    radial_kernel,
)
from .numerics import as_points

logger = logging.getLogger(__name__)

RULE_KINDS = ("general", "radial", "hyvarinen", "logarithmic", "blend")


def local_jet(density: Density, points: np.ndarray) -> LogDensityJet:
    """Batched jet of ``density`` with a finiteness check naming the first bad point."""
    jet = density._jet(points)
    bad = ~(np.isfinite(jet.log_density)
            & np.all(np.isfinite(jet.grad), axis=1)
            & np.all(np.isfinite(jet.hess), axis=(1, 2)))
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise ScoreError(f"non-finite log-density derivatives of {density.describe()} at x={points[index].tolist()}")
    return jet


# ---------------- Batched local formulas ----------------

def general_terms(kernel: Kernel, points: np.ndarray, jet: LogDensityJet) -> np.ndarray:
    sigma, hess = jet.grad, jet.hess
    k = kernel._evaluate(points, sigma)
    return (k.value
            - np.einsum("ni,ni->n", sigma, k.grad_y)
            - k.mixed_trace
            - np.einsum("nij,nji->n", k.hess_y, hess))


def radial_terms(profile: RadialProfile, jet: LogDensityJet) -> np.ndarray:
    sigma, hess = jet.grad, jet.hess
    t = np.sqrt(np.einsum("ni,ni->n", sigma, sigma))
    laplacian = np.trace(hess, axis1=1, axis2=2)
    small = t <= RADIAL_EPSILON
    t_safe = np.where(small, 1.0, t)
    unit = sigma / t_safe[:, None]
    psi = profile.psi(t)
    dpsi = profile.dpsi(t_safe)
    d2psi = profile.d2psi(t_safe)
    slope = dpsi / t_safe
    curvature_along = np.einsum("ni,nij,nj->n", unit, hess, unit)
    closed = psi - slope * (t * t + laplacian) - (d2psi - slope) * curvature_along
    return np.where(small, -profile.curvature_at_zero() * laplacian, closed)


def hyvarinen_terms(jet: LogDensityJet) -> np.ndarray:
    laplacian = np.trace(jet.hess, axis1=1, axis2=2)
    return 2.0 * laplacian + np.einsum("ni,ni->n", jet.grad, jet.grad)


def log_terms(jet: LogDensityJet) -> np.ndarray:
    return -np.asarray(jet.log_density, dtype=float)


# ---------------- Rules ----------------

@dataclass(frozen=True)
class ScoringRule:
    """
    A local scoring rule of order at most two.

    ``propriety_guaranteed`` is False when the kernel failed the concavity
    probe; such rules still evaluate, but nothing is claimed about them.
    """

    kind: str
    kernel: Optional[Kernel] = None
    profile: Optional[RadialProfile] = None
    alpha: float = 0.0
    base: Optional["ScoringRule"] = None
    propriety_guaranteed: bool = True

    @property
    def name(self) -> str:
        if self.kind == "general":
            return f"general:{self.kernel.name}"
        if self.kind == "radial":
            return f"radial:{self.profile.name}"
        if self.kind == "blend":
            return f"blend({self.alpha:g}):{self.base.name}"
        return self.kind

    @property
    def kernel_based(self) -> bool:
        return self.kind in ("general", "radial", "hyvarinen")

    def evaluate_local(self, points: np.ndarray, jet: LogDensityJet) -> np.ndarray:
        """Scores from local data only: x, log p(x), grad log p(x), hess log p(x)."""
        if self.kind == "general":
            if self.kernel.dim != points.shape[1]:
                raise ScoreError(f"kernel dimension {self.kernel.dim} does not match points of dimension {points.shape[1]}")
            return general_terms(self.kernel, points, jet)
        if self.kind == "radial":
            return radial_terms(self.profile, jet)
        if self.kind == "hyvarinen":
            return hyvarinen_terms(jet)
        if self.kind == "logarithmic":
            return log_terms(jet)
        if self.kind == "blend":
            return (1.0 - self.alpha) * self.base.evaluate_local(points, jet) + self.alpha * log_terms(jet)
        raise ScoreError(f"unknown scoring rule kind '{self.kind}'")

    def score(self, density: Density, x):
        points, single = as_points(x, density.dim)
        values = self.evaluate_local(points, local_jet(density, points))
        return float(values[0]) if single else values

    def __call__(self, density: Density, x):
        return self.score(density, x)


def _radial_concave(profile: RadialProfile) -> bool:
    return concavity_probe(radial_kernel(profile, 2)).concave


def kernel_rule(kernel: Kernel) -> ScoringRule:
    concave = concavity_probe(kernel).concave
    if not concave:
        logger.warning("kernel '%s' is not concave on the probe grid; propriety not guaranteed", kernel.name)
    return ScoringRule(kind="general", kernel=kernel, propriety_guaranteed=concave)


def radial_rule(profile: RadialProfile) -> ScoringRule:
    concave = _radial_concave(profile)
    if not concave:
        logger.warning("profile '%s' is not concave on the probe grid; propriety not guaranteed", profile.name)
    return ScoringRule(kind="radial", profile=profile, propriety_guaranteed=concave)


def hyvarinen_rule() -> ScoringRule:
    return ScoringRule(kind="hyvarinen", profile=hyvarinen_profile())


def log_rule() -> ScoringRule:
    return ScoringRule(kind="logarithmic")


def blend_rule(alpha: float, rule: ScoringRule) -> ScoringRule:
    """(1 - alpha) * rule + alpha * logarithmic score."""
    if not 0.0 <= alpha <= 1.0:
        raise ScoreError(f"blend weight must lie in [0, 1], got {alpha}")
    if not rule.kernel_based:
        raise ScoreError(f"blends combine a kernel-based rule with the log score, got '{rule.name}'")
    return ScoringRule(kind="blend", alpha=float(alpha), base=rule, propriety_guaranteed=rule.propriety_guaranteed)


# ---------------- Point-wise operations ----------------

def general_score(kernel: Kernel, density: Density, x):
    """Score of the rule built from ``kernel`` (no concavity probe)."""
    return ScoringRule(kind="general", kernel=kernel).score(density, x)


def radial_score(profile: RadialProfile, density: Density, x):
    """Closed-form score of the radial kernel psi(|y|)."""
    return ScoringRule(kind="radial", profile=profile).score(density, x)


def hyvarinen_score(density: Density, x):
    """2 * laplacian log p(x) + |grad log p(x)|^2."""
    return ScoringRule(kind="hyvarinen").score(density, x)


def log_score(density: Density, x):
    """-log p(x)."""
    return ScoringRule(kind="logarithmic").score(density, x)


def blend_score(alpha: float, kernel_score_rule: ScoringRule, density: Density, x):
    return blend_rule(alpha, kernel_score_rule).score(density, x)
