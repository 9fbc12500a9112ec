"""
Density families with exact log-density derivatives.

Every built-in family belongs to the class of smooth, strictly positive
densities on R^d whose derivatives decay faster than any power and whose
log-derivatives grow at most polynomially: Gaussians,
products of logistics, and finite mixtures of these. Membership holds by
construction; a user-supplied ``Density`` subclass accepts that contract,
since the tail conditions cannot be checked pointwise.

All evaluation methods accept one point (shape (d,), or a scalar when d == 1)
or a stack of points (shape (n, d)) and return scalars or batched arrays.
Density objects are immutable after construction.
"""

import logging
import math
from abc import ABC, abstractmethod
from functools import cached_property
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg, special

from .errors import DensityError
from .numerics import as_points, sample_blocks

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12
LOGISTIC_TAIL_SCALES = 40.0


class LogDensityJet(NamedTuple):
    """log p, grad log p and Hessian of log p at one or more points."""
    log_density: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


class Density(ABC):
    """A smooth positive density on R^d exposing log p and its first two derivatives."""

    dim: int

    @abstractmethod
    def _jet(self, points: np.ndarray) -> LogDensityJet:
        """Batched jet for points of shape (n, d)."""

    def _log_density(self, points: np.ndarray) -> np.ndarray:
        return self._jet(points).log_density

    @abstractmethod
    def describe(self) -> str:
        """Short label for tables and messages."""

    @abstractmethod
    def _box_center(self) -> np.ndarray:
        ...

    @abstractmethod
    def _box_halfwidth(self, n_sd: float) -> np.ndarray:
        ...

    has_sampler = False

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise DensityError(f"{self.describe()} has no exact sampler; use quadrature instead")

    # ---- public evaluation ----

    def jet(self, x) -> LogDensityJet:
        points, single = as_points(x, self.dim)
        out = self._jet(points)
        if single:
            return LogDensityJet(float(out.log_density[0]), out.grad[0], out.hess[0])
        return out

    def log_density(self, x):
        points, single = as_points(x, self.dim)
        values = self._log_density(points)
        return float(values[0]) if single else values

    def grad_log_density(self, x):
        points, single = as_points(x, self.dim)
        grad = self._jet(points).grad
        return grad[0] if single else grad

    def hess_log_density(self, x):
        points, single = as_points(x, self.dim)
        hess = self._jet(points).hess
        return hess[0] if single else hess

    def laplacian_log_density(self, x):
        points, single = as_points(x, self.dim)
        lap = np.trace(self._jet(points).hess, axis1=1, axis2=2)
        return float(lap[0]) if single else lap

    def support_box(self, n_sd: float = 12.0) -> Tuple[np.ndarray, np.ndarray]:
        """Box holding all but a negligible share of the mass, for quadrature."""
        center = self._box_center()
        half = self._box_halfwidth(n_sd)
        return center - half, center + half

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.describe()}>"


# ---------------- Gaussian ----------------

class GaussianDensity(Density):
    """N(mean, cov) with a Cholesky factorization stored at construction."""

    has_sampler = True

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if mean.ndim != 1:
            raise DensityError(f"mean must be a vector, got shape {mean.shape}")
        d = mean.size
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(d)
        if cov.shape != (d, d):
            raise DensityError(f"covariance must have shape ({d}, {d}), got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
            raise DensityError("covariance must be symmetric")
        eigenvalues = np.linalg.eigvalsh(cov)
        if eigenvalues[0] <= 0:
            raise DensityError(
                f"covariance is not positive definite: smallest eigenvalue {eigenvalues[0]:.6g} <= 0"
            )
        self.dim = d
        self.mean = _frozen(mean)
        self.cov = _frozen(cov)
        self._chol = _frozen(linalg.cholesky(cov, lower=True))
        self.precision = _frozen(linalg.cho_solve((self._chol, True), np.eye(d)))
        log_det = 2.0 * float(np.sum(np.log(np.diag(self._chol))))
        self._log_norm = -0.5 * (d * math.log(2 * math.pi) + log_det)

    def _jet(self, points):
        centered = points - self.mean
        grad = -centered @ self.precision
        log_density = self._log_norm + 0.5 * np.einsum("ni,ni->n", centered, grad)
        hess = np.broadcast_to(-self.precision, (len(points), self.dim, self.dim))
        return LogDensityJet(log_density, grad, hess)

    def _log_density(self, points):
        z = linalg.solve_triangular(self._chol, (points - self.mean).T, lower=True)
        return self._log_norm - 0.5 * np.sum(z * z, axis=0)

    def draw(self, rng, size):
        return self.mean + rng.standard_normal((size, self.dim)) @ self._chol.T

    def describe(self):
        if np.allclose(self.cov, self.cov[0, 0] * np.eye(self.dim)):
            return f"N({_fmt(self.mean)}, {self.cov[0, 0]:.6g}I)"
        return f"N({_fmt(self.mean)}, cov)"

    def _box_center(self):
        return np.array(self.mean)

    def _box_halfwidth(self, n_sd):
        return n_sd * np.sqrt(np.diag(self.cov))


def _fmt(vector) -> str:
    values = [f"{v:.6g}" for v in np.atleast_1d(vector)]
    return values[0] if len(values) == 1 else "[" + ",".join(values) + "]"


# ---------------- Logistic product ----------------

class LogisticProductDensity(Density):
    """Product of independent one-dimensional logistic densities."""

    has_sampler = True

    def __init__(self, locations, scales):
        locations = np.atleast_1d(np.asarray(locations, dtype=float))
        scales = np.atleast_1d(np.asarray(scales, dtype=float))
        if scales.shape != locations.shape:
            raise DensityError(f"{locations.size} locations but {scales.size} scales")
        if np.any(scales <= 0):
            raise DensityError(f"logistic scales must be positive, got {scales.tolist()}")
        self.dim = locations.size
        self.locations = _frozen(locations)
        self.scales = _frozen(scales)

    def _jet(self, points):
        z = (points - self.locations) / self.scales
        log_density = np.sum(-z - 2.0 * np.logaddexp(0.0, -z) - np.log(self.scales), axis=1)
        grad = -np.tanh(0.5 * z) / self.scales
        curvature = -2.0 * special.expit(z) * special.expit(-z) / self.scales ** 2
        hess = curvature[:, :, None] * np.eye(self.dim)[None, :, :]
        return LogDensityJet(log_density, grad, hess)

    def draw(self, rng, size):
        return rng.logistic(self.locations, self.scales, size=(size, self.dim))

    def describe(self):
        return f"Logistic({_fmt(self.locations)}, {_fmt(self.scales)})"

    def _box_center(self):
        return np.array(self.locations)

    def _box_halfwidth(self, n_sd):
        # exponential tails: 12 sd leaves ~1e-10 of mass outside
        sd = self.scales * math.pi / math.sqrt(3.0)
        return np.maximum(n_sd * sd, LOGISTIC_TAIL_SCALES * self.scales)


# ---------------- Mixtures ----------------

def _combine_component_jets(log_weights, log_comp, grads, hessians) -> LogDensityJet:
    """
    Mixture jet from component jets.

    log_weights: (K,) or (n, K); log_comp: (n, K); grads: (n, K, d);
    hessians: (n, K, d, d) or broadcastable.
    """
    joint = log_weights + log_comp
    log_density = special.logsumexp(joint, axis=1)
    resp = np.exp(joint - log_density[:, None])
    grad = np.einsum("nk,nki->ni", resp, grads)
    centered = grads - grad[:, None, :]
    hess = (np.einsum("nk,nkij->nij", resp, np.broadcast_to(hessians, grads.shape + grads.shape[-1:]))
            + np.einsum("nk,nki,nkj->nij", resp, centered, centered))
    return LogDensityJet(log_density, grad, hess)


class MixtureDensity(Density):
    """Finite mixture sum_i w_i p_i of densities of equal dimension."""

    def __init__(self, weights, components: Sequence[Density]):
        components = list(components)
        if not components:
            raise DensityError("a mixture needs at least one component")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise DensityError(f"mixture components disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self._set_weights(weights, len(components))
        self.components = tuple(components)

    def _set_weights(self, weights, count: int) -> None:
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if weights.shape != (count,):
            raise DensityError(f"{weights.size} weights for {count} components")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DensityError(f"mixture weights must be nonnegative, got {weights.tolist()}")
        if abs(float(np.sum(weights)) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise DensityError(f"mixture weights sum to {float(np.sum(weights))!r}, expected 1")
        self.weights = _frozen(weights)
        with np.errstate(divide="ignore"):
            self._log_weights = _frozen(np.log(weights))

    @property
    def has_sampler(self):
        return all(c.has_sampler for c in self.components)

    def _component_jets(self, points):
        jets = [c._jet(points) for c in self.components]
        log_comp = np.column_stack([j.log_density for j in jets])
        grads = np.stack([j.grad for j in jets], axis=1)
        hessians = np.stack([np.broadcast_to(j.hess, (len(points), self.dim, self.dim)) for j in jets], axis=1)
        return log_comp, grads, hessians

    def _jet(self, points):
        return self.jet_with_log_weights(points, self._log_weights)

    def jet_with_log_weights(self, points: np.ndarray, log_weights: np.ndarray) -> LogDensityJet:
        """Jet of the same components under other (possibly per-point) log-weights."""
        log_comp, grads, hessians = self._component_jets(points)
        return _combine_component_jets(log_weights, log_comp, grads, hessians)

    def _log_density(self, points):
        log_comp = np.column_stack([c._log_density(points) for c in self.components])
        return special.logsumexp(self._log_weights + log_comp, axis=1)

    def reweighted(self, weights) -> "MixtureDensity":
        return MixtureDensity(weights, self.components)

    def draw(self, rng, size):
        if not self.has_sampler:
            return super().draw(rng, size)
        labels = rng.choice(len(self.components), size=size, p=self.weights)
        out = np.empty((size, self.dim))
        for k, component in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = component.draw(rng, idx.size)
        return out

    def describe(self):
        parts = [f"{w:.6g}*{c.describe()}" for w, c in zip(self.weights, self.components)]
        return " + ".join(parts)

    def _active(self):
        return [c for w, c in zip(self.weights, self.components) if w > 0] or list(self.components)

    def _box_center(self):
        low, high = self.support_box()
        return 0.5 * (low + high)

    def _box_halfwidth(self, n_sd):
        low, high = self.support_box(n_sd)
        return 0.5 * (high - low)

    def support_box(self, n_sd: float = 12.0):
        # component centers padded by the widest component
        active = self._active()
        centers = np.array([c._box_center() for c in active])
        half = np.max(np.array([c._box_halfwidth(n_sd) for c in active]), axis=0)
        return centers.min(axis=0) - half, centers.max(axis=0) + half


class KernelDensityEstimate(MixtureDensity):
    """
    Gaussian KDE: mixture of N(x_i, bandwidth^2 I) with (by default) equal weights.

    Components are evaluated in one vectorized pass; reweighting (leave-one-out)
    keeps the same points and never rebuilds component objects.
    """

    has_sampler = True

    def __init__(self, points, bandwidth: float, weights=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or len(points) == 0 or points.shape[1] == 0:
            raise DensityError("kde needs at least one point")
        if not bandwidth > 0:
            raise DensityError(f"kde bandwidth must be positive, got {bandwidth}")
        n, d = points.shape
        self.dim = d
        self._set_weights(np.full(n, 1.0 / n) if weights is None else weights, n)
        self.points = _frozen(points)
        self.bandwidth = float(bandwidth)
        self._log_norm = -0.5 * d * math.log(2 * math.pi * self.bandwidth ** 2)

    @cached_property
    def components(self):
        cov = self.bandwidth ** 2 * np.eye(self.dim)
        return tuple(GaussianDensity(p, cov) for p in self.points)

    def _component_jets(self, points):
        diff = points[:, None, :] - self.points[None, :, :]
        h2 = self.bandwidth ** 2
        log_comp = self._log_norm - 0.5 * np.sum(diff * diff, axis=2) / h2
        grads = -diff / h2
        hessians = -np.eye(self.dim) / h2
        return log_comp, grads, hessians

    def _log_density(self, points):
        log_comp, _, _ = self._component_jets(points)
        return special.logsumexp(self._log_weights + log_comp, axis=1)

    def reweighted(self, weights) -> "KernelDensityEstimate":
        return KernelDensityEstimate(self.points, self.bandwidth, weights)

    def leave_one_out(self, index: int) -> "KernelDensityEstimate":
        """The KDE of all points but ``index``, as a reweighting of this mixture."""
        n = len(self.points)
        if n < 2:
            raise DensityError("leave-one-out needs at least two points")
        weights = np.full(n, 1.0 / (n - 1))
        weights[index] = 0.0
        return self.reweighted(weights)

    def leave_one_out_jets(self) -> LogDensityJet:
        """Jets of every leave-one-out KDE at its held-out point, in one batch."""
        n = len(self.points)
        if n < 2:
            raise DensityError("leave-one-out needs at least two points")
        log_weights = np.full((n, n), -math.log(n - 1))
        np.fill_diagonal(log_weights, -np.inf)
        return self.jet_with_log_weights(np.array(self.points), log_weights)

    def draw(self, rng, size):
        labels = rng.choice(len(self.points), size=size, p=self.weights)
        return self.points[labels] + self.bandwidth * rng.standard_normal((size, self.dim))

    def support_box(self, n_sd: float = 12.0):
        active = self.points[self.weights > 0]
        half = n_sd * self.bandwidth
        return active.min(axis=0) - half, active.max(axis=0) + half

    def describe(self):
        return f"KDE(n={len(self.points)}, h={self.bandwidth:.6g})"


class UnnormalizedDensity(Density):
    """c * p: log-density shifted by log c, derivatives unchanged."""

    def __init__(self, base: Density, factor: float):
        if not factor > 0:
            raise DensityError(f"normalizing factor must be positive, got {factor}")
        self.base = base
        self.factor = float(factor)
        self.dim = base.dim
        self._log_factor = math.log(factor)

    @property
    def has_sampler(self):
        return self.base.has_sampler

    def draw(self, rng, size):
        return self.base.draw(rng, size)

    def _jet(self, points):
        jet = self.base._jet(points)
        return LogDensityJet(jet.log_density + self._log_factor, jet.grad, jet.hess)

    def _log_density(self, points):
        return self.base._log_density(points) + self._log_factor

    def describe(self):
        return f"{self.factor:.6g}*({self.base.describe()})"

    def _box_center(self):
        return self.base._box_center()

    def _box_halfwidth(self, n_sd):
        return self.base._box_halfwidth(n_sd)

    def support_box(self, n_sd: float = 12.0):
        return self.base.support_box(n_sd)


# ---------------- Constructors ----------------

def gaussian(mean, cov=None) -> GaussianDensity:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianDensity(mean, np.eye(mean.size) if cov is None else cov)


def gaussian_mixture(weights, means, covs) -> MixtureDensity:
    means = [np.atleast_1d(np.asarray(m, dtype=float)) for m in means]
    if len(covs) != len(means):
        raise DensityError(f"{len(means)} means but {len(covs)} covariances")
    return MixtureDensity(weights, [GaussianDensity(m, c) for m, c in zip(means, covs)])


def logistic_product(locations, scales) -> LogisticProductDensity:
    return LogisticProductDensity(locations, scales)


def kde(points, bandwidth: float) -> KernelDensityEstimate:
    return KernelDensityEstimate(points, bandwidth)


def mixture_path(q: Density, p: Density, t: float) -> MixtureDensity:
    """p_t = (1 - t) q + t p."""
    if not 0.0 <= t <= 1.0:
        raise DensityError(f"mixture path parameter must lie in [0, 1], got {t}")
    if q.dim != p.dim:
        raise DensityError(f"mixture path endpoints disagree on dimension: {q.dim} vs {p.dim}")
    return MixtureDensity([1.0 - t, t], [q, p])


def unnormalized(density: Density, factor: float) -> UnnormalizedDensity:
    return UnnormalizedDensity(density, factor)


def sample(density: Density, count: int, seed: int) -> np.ndarray:
    """``count`` draws from ``density``, deterministic in ``seed``."""
    if count < 0:
        raise DensityError(f"sample count must be nonnegative, got {count}")
    if not density.has_sampler:
        raise DensityError(f"{density.describe()} has no exact sampler; estimate expectations by quadrature instead")
    logger.debug("sampling %d points from %s (seed %d)", count, density.describe(), seed)
    blocks: List[np.ndarray] = list(sample_blocks(density, count, seed))
    if not blocks:
        return np.empty((0, density.dim))
    return np.concatenate(blocks, axis=0)
