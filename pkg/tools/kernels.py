"""
Kernels k(x, y) with the derivative data needed to build scoring rules.

Built-in kernels are radial, k(x, y) = psi(|y|), for a concave C^2 profile
psi on [0, inf) with psi(0) = psi'(0) = 0. Radial derivatives divide by |y|;
below RADIAL_EPSILON the analytic limits are used instead:
grad_y k = psi''(0) y and hess_y k = psi''(0) I.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .densities import mixture_path
from .errors import KernelError
from .numerics import EngineConfig, ExpectationResult, as_points, expect

logger = logging.getLogger(__name__)

RADIAL_EPSILON = 1e-6
CONCAVITY_TOLERANCE = 1e-10
LOG2 = math.log(2.0)


# ---------------- Profiles ----------------

@dataclass(frozen=True)
class RadialProfile:
    """psi with its first two derivatives, all vectorized over t >= 0."""

    name: str
    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    d2psi: Callable[[np.ndarray], np.ndarray]
    growth: Tuple[float, float] = (1.0, 2.0)
    params: Dict[str, float] = field(default_factory=dict)

    def curvature_at_zero(self) -> float:
        return float(self.d2psi(np.zeros(1))[0])


def hyvarinen_profile() -> RadialProfile:
    """psi(t) = -t^2; the radial kernel reproduces the Hyvarinen score."""
    return RadialProfile(
        name="hyvarinen",
        psi=lambda t: -np.square(t),
        dpsi=lambda t: -2.0 * np.asarray(t, dtype=float),
        d2psi=lambda t: np.full(np.shape(t), -2.0),
        growth=(1.0, 2.0),
    )


def _log_cosh(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def logcosh_profile(scale: float = 1.0) -> RadialProfile:
    """psi(t) = -c^2 log cosh(t / c); c = 1 gives -log cosh t."""
    if not scale > 0:
        raise KernelError(f"logcosh scale must be positive, got {scale}")
    c = float(scale)
    return RadialProfile(
        name="logcosh",
        psi=lambda t: -c * c * _log_cosh(np.asarray(t, dtype=float) / c),
        dpsi=lambda t: -c * np.tanh(np.asarray(t, dtype=float) / c),
        d2psi=lambda t: -4.0 * special.expit(2.0 * np.asarray(t, dtype=float) / c)
        * special.expit(-2.0 * np.asarray(t, dtype=float) / c),
        growth=(c, 1.0),
        params={"scale": c},
    )


def convex_quadratic_profile() -> RadialProfile:
    """psi(t) = +t^2: convex, for counterexamples only."""
    return RadialProfile(
        name="convex_quadratic",
        psi=lambda t: np.square(t),
        dpsi=lambda t: 2.0 * np.asarray(t, dtype=float),
        d2psi=lambda t: np.full(np.shape(t), 2.0),
        growth=(1.0, 2.0),
    )


def zero_profile() -> RadialProfile:
    return RadialProfile(
        name="zero",
        psi=lambda t: np.zeros(np.shape(t)),
        dpsi=lambda t: np.zeros(np.shape(t)),
        d2psi=lambda t: np.zeros(np.shape(t)),
        growth=(1.0, 1.0),
    )


PROFILES = {
    "hyvarinen": hyvarinen_profile,
    "logcosh": logcosh_profile,
    "convex_quadratic": convex_quadratic_profile,
    "zero": zero_profile,
}


def profile_by_name(name: str, scale: float = 1.0) -> RadialProfile:
    try:
        factory = PROFILES[name]
    except KeyError:
        raise KernelError(f"unknown kernel profile '{name}', try: " + ", ".join(PROFILES)) from None
    return factory(scale) if name == "logcosh" else factory()


def check_profile(profile: RadialProfile, grid: Optional[np.ndarray] = None) -> Dict:
    """psi(0), psi'(0) and the largest psi'' on a grid (default 0, 0.01, ..., 10)."""
    t = np.round(np.arange(0, 1001) * 0.01, 10) if grid is None else np.asarray(grid, dtype=float)
    zero = np.zeros(1)
    curvature = profile.d2psi(t)
    max_curvature = float(np.max(curvature))
    return {
        "profile": profile.name,
        "psi_at_zero": float(profile.psi(zero)[0]),
        "dpsi_at_zero": float(profile.dpsi(zero)[0]),
        "max_d2psi": max_curvature,
        "concave_on_grid": max_curvature <= 0.0,
    }


# ---------------- Kernels ----------------

class KernelJet(NamedTuple):
    value: np.ndarray
    grad_y: np.ndarray
    hess_y: np.ndarray
    mixed_trace: np.ndarray


class Kernel(ABC):
    """
    A twice-differentiable kernel k(x, y) on R^d x R^d.

    ``mixed_trace`` is sum_i d^2 k / (dx_i dy_i); it is part of the interface
    so that x-dependent kernels fit the scoring-rule construction.
    """

    dim: int
    name: str = "kernel"

    @abstractmethod
    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> KernelJet:
        """Batched evaluation for x, y of shape (n, d)."""

    def growth_constants(self) -> Tuple[float, float]:
        return (1.0, 2.0)

    def evaluate(self, x, y) -> KernelJet:
        ys, single = as_points(y, self.dim)
        xs, _ = as_points(np.zeros_like(ys) if x is None else x, self.dim)
        if len(xs) == 1 and len(ys) > 1:
            xs = np.broadcast_to(xs, ys.shape)
        out = self._evaluate(xs, ys)
        if single:
            return KernelJet(float(out.value[0]), out.grad_y[0], out.hess_y[0], float(out.mixed_trace[0]))
        return out

    def value(self, x, y):
        return self.evaluate(x, y).value

    def grad_y(self, x, y):
        return self.evaluate(x, y).grad_y

    def hess_y(self, x, y):
        return self.evaluate(x, y).hess_y

    def mixed_trace(self, x, y):
        return self.evaluate(x, y).mixed_trace


class RadialKernel(Kernel):
    """k(x, y) = psi(|y|)."""

    def __init__(self, profile: RadialProfile, dim: int):
        if dim < 1:
            raise KernelError(f"kernel dimension must be positive, got {dim}")
        self.profile = profile
        self.dim = int(dim)
        self.name = profile.name
        self._curvature0 = profile.curvature_at_zero()

    def growth_constants(self):
        return self.profile.growth

    def _evaluate(self, x, y):
        n, d = y.shape
        t = np.sqrt(np.einsum("ni,ni->n", y, y))
        small = t <= RADIAL_EPSILON
        t_safe = np.where(small, 1.0, t)
        psi = self.profile.psi(t)
        dpsi = self.profile.dpsi(t_safe)
        d2psi = self.profile.d2psi(t_safe)

        slope = np.where(small, self._curvature0, dpsi / t_safe)
        bend = np.where(small, 0.0, d2psi - dpsi / t_safe)
        unit = y / t_safe[:, None]
        grad = slope[:, None] * y
        hess = (slope[:, None, None] * np.eye(d)[None, :, :]
                + bend[:, None, None] * np.einsum("ni,nj->nij", unit, unit))
        return KernelJet(psi, grad, hess, np.zeros(n))

    def __repr__(self):
        return f"<RadialKernel {self.name} d={self.dim}>"


def radial_kernel(profile: RadialProfile, dim: int) -> RadialKernel:
    return RadialKernel(profile, dim)


def kernel_by_name(name: str, dim: int, scale: float = 1.0) -> RadialKernel:
    return RadialKernel(profile_by_name(name, scale), dim)


def growth_check(kernel: Kernel, grid: Sequence, constants: Optional[Tuple[float, float]] = None) -> Dict:
    """
    Spot check |k(x, y)| <= C (1 + |x| + |y|)^r on a grid of (x, y) pairs.

    ``grid`` is a sequence of (x, y) pairs; constants default to the kernel's own.
    """
    C, r = constants or kernel.growth_constants()
    worst = 0.0
    for x, y in grid:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        bound = C * (1.0 + np.linalg.norm(x) + np.linalg.norm(y)) ** r
        worst = max(worst, abs(float(kernel.value(x, y))) / bound)
    return {"C": C, "r": r, "max_ratio": worst, "passed": worst <= 1.0}


# ---------------- Diagnostics ----------------

@dataclass(frozen=True)
class ConcavityReport:
    kernel: str
    max_eigenvalue: float
    worst_point: List[float]
    points_checked: int
    concave: bool


def default_probe_grid(dim: int, radii: Optional[np.ndarray] = None, directions: int = 8, seed: int = 0) -> np.ndarray:
    """y-points on rays through the origin with radii 0, 0.01, ..., 10."""
    radii = np.arange(0, 1001) * 0.01 if radii is None else np.asarray(radii, dtype=float)
    rng = np.random.default_rng(seed)
    rays = rng.standard_normal((directions, dim))
    rays[0] = np.eye(dim)[0]
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return (radii[None, :, None] * rays[:, None, :]).reshape(-1, dim)


def concavity_probe(kernel: Kernel, grid=None, x=None) -> ConcavityReport:
    """Largest eigenvalue of hess_y k over a grid of y-points."""
    ys = default_probe_grid(kernel.dim) if grid is None else as_points(grid, kernel.dim)[0]
    xs = np.zeros_like(ys) if x is None else np.broadcast_to(as_points(x, kernel.dim)[0], ys.shape)
    top = np.linalg.eigvalsh(kernel._evaluate(xs, ys).hess_y)[:, -1]
    worst = int(np.argmax(top))
    max_eigenvalue = float(top[worst])
    return ConcavityReport(
        kernel=kernel.name,
        max_eigenvalue=max_eigenvalue,
        worst_point=ys[worst].tolist(),
        points_checked=len(ys),
        concave=max_eigenvalue <= CONCAVITY_TOLERANCE,
    )


def phi_functional(kernel: Kernel, density, engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """Phi(p) = integral of k(x, grad log p(x)) p(x) dx."""
    if kernel.dim != density.dim:
        raise KernelError(f"kernel dimension {kernel.dim} does not match density dimension {density.dim}")

    def integrand(points):
        sigma = density._jet(points).grad
        return kernel._evaluate(points, sigma).value

    return expect(integrand, density, engine)


@dataclass(frozen=True)
class PathConcavityReport:
    kernel: str
    t: List[float]
    values: List[float]
    errors: List[float]
    second_differences: List[float]
    tolerances: List[float]
    concave: bool

    def rows(self) -> List[Dict]:
        rows = []
        for i, (t, v, e) in enumerate(zip(self.t, self.values, self.errors)):
            inner = 0 < i < len(self.t) - 1
            rows.append({
                "t": t,
                "phi": v,
                "phi_error": e,
                "second_difference": self.second_differences[i - 1] if inner else "",
                "tolerance": self.tolerances[i - 1] if inner else "",
            })
        return rows


def phi_path_concavity(kernel: Kernel, q, p, t_grid: Sequence[float], engine: Optional[EngineConfig] = None,
                       k_sigma: float = 5.0) -> PathConcavityReport:
    """
    Phi along p_t = (1 - t) q + t p and its divided second differences.

    For triples a < b < c the reported difference is
    (Phi_c - Phi_b)/(c - b) - (Phi_b - Phi_a)/(b - a), which is the ordinary
    second difference divided by h on a uniform grid. The tolerance propagates
    each value's error bound through the same formula.
    """
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 3:
        raise KernelError(f"path concavity needs at least 3 grid points, got {len(t_grid)}")
    if any(not 0.0 <= t <= 1.0 for t in t_grid) or any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise KernelError("t grid must be strictly increasing inside [0, 1]")

    results = [phi_functional(kernel, mixture_path(q, p, t), engine) for t in t_grid]
    values = [r.value for r in results]
    tols = [r.tolerance(k_sigma) for r in results]
    diffs, bounds = [], []
    for i in range(1, len(t_grid) - 1):
        left = t_grid[i] - t_grid[i - 1]
        right = t_grid[i + 1] - t_grid[i]
        diffs.append((values[i + 1] - values[i]) / right - (values[i] - values[i - 1]) / left)
        bounds.append(tols[i + 1] / right + tols[i] * (1 / right + 1 / left) + tols[i - 1] / left)
    concave = all(dd <= b for dd, b in zip(diffs, bounds))
    logger.debug("phi path for %s: max second difference %.3e", kernel.name, max(diffs))
    return PathConcavityReport(
        kernel=kernel.name,
        t=t_grid,
        values=values,
        errors=[r.error for r in results],
        second_differences=diffs,
        tolerances=bounds,
        concave=concave,
    )
