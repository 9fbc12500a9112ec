"""
Expectation engines and finite-difference oracles.

Two engines compute E_q[fn]:

- ``expect_quadrature``: composite Gauss-Legendre panels on a truncated box,
  tensor product for d <= 2, error estimate by node doubling.
- ``expect_mc``: seeded Monte Carlo for any d, error estimate = standard error.

Monte Carlo draws come in fixed blocks of ``STREAM_BLOCK`` samples; block b is
seeded from ``SeedSequence(seed, spawn_key=(b,))``. ``chunk_size`` only groups
whole blocks for the worker pool, so results do not depend on it (or on the
thread count). Partial sums are reduced with ``math.fsum``.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special

from .errors import EngineError

logger = logging.getLogger(__name__)

STREAM_BLOCK = 8192
QUADRATURE_ROUNDING_FLOOR = 1e-13
MAX_QUADRATURE_DIM = 2

Integrand = Callable[[np.ndarray], np.ndarray]


# ---------------- Configuration ----------------

class QuadratureConfig(BaseModel):
    """Tensor-product composite Gauss-Legendre quadrature on a truncated box."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    engine: Literal["quadrature"] = "quadrature"
    nodes_per_axis: int = Field(default=401, ge=1, description="Requested nodes per axis before doubling")
    panel_order: int = Field(default=8, ge=1, le=64, description="Gauss-Legendre nodes per panel")
    box_sd: float = Field(default=12.0, gt=0, description="Half-width of the auto box in standard deviations")
    bounds: Optional[List[Tuple[float, float]]] = Field(default=None, description="Explicit (low, high) per axis")
    chunk_size: int = Field(default=4096, ge=1, description="Nodes evaluated per integrand call")

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.bounds is not None:
            for low, high in self.bounds:
                if not high > low:
                    raise ValueError(f"quadrature bounds must satisfy low < high, got ({low}, {high})")
        return self

    @property
    def panels(self) -> int:
        return max(1, self.nodes_per_axis // self.panel_order)


class MonteCarloConfig(BaseModel):
    """Seeded Monte Carlo with block-wise substreams."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    engine: Literal["monte_carlo"] = "monte_carlo"
    samples: int = Field(default=100_000, ge=2)
    seed: int = Field(default=0, ge=0)
    chunk_size: int = Field(default=65_536, ge=1, description="Samples per worker task, rounded up to whole blocks")
    threads: int = Field(default=1, ge=1)


EngineConfig = Union[QuadratureConfig, MonteCarloConfig]


# ---------------- Results ----------------

@dataclass(frozen=True)
class ExpectationResult:
    value: float
    error: float
    engine: str
    config: Dict = field(default_factory=dict)
    evaluations: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise EngineError(f"{self.engine} produced a non-finite value {self.value}")
        if not self.error >= 0:
            raise EngineError(f"{self.engine} produced a negative or NaN error estimate {self.error}")

    @property
    def is_monte_carlo(self) -> bool:
        return self.engine == "monte_carlo"

    def tolerance(self, k_sigma: float = 5.0) -> float:
        """Half-width used when this result is compared with something else."""
        return k_sigma * self.error if self.is_monte_carlo else self.error

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "error": self.error,
            "engine": self.engine,
            "config": dict(self.config),
            "evaluations": self.evaluations,
        }


def _tolerance_of(item, k_sigma: float) -> Tuple[float, float]:
    if isinstance(item, ExpectationResult):
        return item.value, item.tolerance(k_sigma)
    return float(item), 0.0


def agree(a, b, k_sigma: float = 5.0, extra: float = 0.0) -> bool:
    """
    Combined-tolerance comparison of two results (or a result and a reference value).

    Monte Carlo errors are scaled by ``k_sigma``; quadrature errors are used as is.
    """
    value_a, tol_a = _tolerance_of(a, k_sigma)
    value_b, tol_b = _tolerance_of(b, k_sigma)
    return abs(value_a - value_b) <= tol_a + tol_b + extra


def difference(a: ExpectationResult, b: ExpectationResult) -> ExpectationResult:
    """a - b with errors added (independent estimates)."""
    return ExpectationResult(
        value=a.value - b.value,
        error=a.error + b.error,
        engine=a.engine if a.engine == b.engine else "mixed",
        config={"minuend": a.config, "subtrahend": b.config},
        evaluations=a.evaluations + b.evaluations,
    )


# ---------------- Helpers ----------------

def as_points(x, dim: int) -> Tuple[np.ndarray, bool]:
    """
    Normalize a point or a stack of points to shape (n, dim).

    Returns the array and whether the input was a single point.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise EngineError(f"scalar point given for a {dim}-dimensional density")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != dim:
            raise EngineError(f"point has {arr.shape[0]} coordinates, expected {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim == 2 and arr.shape[1] == dim:
        return arr, False
    raise EngineError(f"points must have shape ({dim},) or (n, {dim}), got {arr.shape}")


def _check_finite(values: np.ndarray, points: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        index = int(np.flatnonzero(bad.reshape(len(points), -1).any(axis=1))[0])
        raise EngineError(f"non-finite {what} at x={points[index].tolist()}")


# ---------------- Quadrature ----------------

def gauss_legendre_rule(low: float, high: float, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [low, high]."""
    base_nodes, base_weights = special.roots_legendre(order)
    edges = np.linspace(low, high, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * base_nodes[None, :]).ravel()
    weights = (half[:, None] * base_weights[None, :]).ravel()
    return nodes, weights


def _box(q, config: QuadratureConfig) -> Tuple[np.ndarray, np.ndarray]:
    if config.bounds is not None:
        if len(config.bounds) != q.dim:
            raise EngineError(f"quadrature bounds given for {len(config.bounds)} axes, density has {q.dim}")
        low = np.array([b[0] for b in config.bounds], dtype=float)
        high = np.array([b[1] for b in config.bounds], dtype=float)
        return low, high
    return q.support_box(config.box_sd)


def _tensor_grid(low: np.ndarray, high: np.ndarray, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    rules = [gauss_legendre_rule(lo, hi, panels, order) for lo, hi in zip(low, high)]
    if len(rules) == 1:
        nodes, weights = rules[0]
        return nodes.reshape(-1, 1), weights
    (x_nodes, x_weights), (y_nodes, y_weights) = rules
    gx, gy = np.meshgrid(x_nodes, y_nodes, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    weights = np.outer(x_weights, y_weights).ravel()
    return points, weights


def _integrate_grid(fn: Integrand, q, points: np.ndarray, weights: np.ndarray, chunk_size: int) -> Tuple[float, float]:
    sums: List[float] = []
    abs_sums: List[float] = []
    for start in range(0, len(points), chunk_size):
        chunk = points[start:start + chunk_size]
        density = np.exp(q.log_density(chunk))
        values = np.asarray(fn(chunk), dtype=float).reshape(-1)
        _check_finite(values, chunk, "integrand")
        terms = weights[start:start + chunk_size] * values * density
        sums.append(float(np.sum(terms)))
        abs_sums.append(float(np.sum(np.abs(terms))))
    return math.fsum(sums), math.fsum(abs_sums)


def expect_quadrature(fn: Integrand, q, config: Optional[QuadratureConfig] = None) -> ExpectationResult:
    """
    E_q[fn] by composite Gauss-Legendre quadrature over a truncated box.

    The reported value uses twice the configured panel count; the error is the
    difference from the configured resolution plus a rounding floor.
    """
    config = config or QuadratureConfig()
    if q.dim > MAX_QUADRATURE_DIM:
        raise EngineError(
            f"quadrature supports d <= {MAX_QUADRATURE_DIM}, density has d={q.dim}; use the Monte Carlo engine"
        )
    low, high = _box(q, config)
    coarse_points, coarse_weights = _tensor_grid(low, high, config.panels, config.panel_order)
    fine_points, fine_weights = _tensor_grid(low, high, 2 * config.panels, config.panel_order)
    logger.debug("quadrature: d=%d, box=[%s, %s], nodes=%d+%d",
                 q.dim, low.tolist(), high.tolist(), len(coarse_points), len(fine_points))

    coarse, _ = _integrate_grid(fn, q, coarse_points, coarse_weights, config.chunk_size)
    fine, fine_abs = _integrate_grid(fn, q, fine_points, fine_weights, config.chunk_size)
    error = abs(fine - coarse) + QUADRATURE_ROUNDING_FLOOR * fine_abs
    return ExpectationResult(
        value=fine,
        error=error,
        engine="quadrature",
        config={**config.model_dump(), "box_low": low.tolist(), "box_high": high.tolist()},
        evaluations=len(coarse_points) + len(fine_points),
    )


# ---------------- Monte Carlo ----------------

def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def block_sizes(count: int) -> List[int]:
    full, rest = divmod(count, STREAM_BLOCK)
    return [STREAM_BLOCK] * full + ([rest] if rest else [])


def draw_block(q, seed: int, block: int, size: int) -> np.ndarray:
    if not getattr(q, "has_sampler", False):
        raise EngineError(f"{q.describe()} has no exact sampler; use the quadrature engine instead")
    return q.draw(block_rng(seed, block), size)


def sample_blocks(q, count: int, seed: int) -> Iterator[np.ndarray]:
    """Yield the sample stream of ``q`` block by block."""
    for block, size in enumerate(block_sizes(count)):
        yield draw_block(q, seed, block, size)


def expect_mc_many(fns: Mapping[str, Integrand], q, config: Optional[MonteCarloConfig] = None) -> Dict[str, ExpectationResult]:
    """
    Monte Carlo means of several integrands over one shared draw stream
    (common random numbers).
    """
    config = config or MonteCarloConfig()
    if not getattr(q, "has_sampler", False):
        raise EngineError(f"{q.describe()} has no exact sampler; use the quadrature engine instead")
    sizes = block_sizes(config.samples)
    blocks_per_chunk = max(1, math.ceil(config.chunk_size / STREAM_BLOCK))
    chunks = [list(range(start, min(start + blocks_per_chunk, len(sizes))))
              for start in range(0, len(sizes), blocks_per_chunk)]
    names = list(fns)
    logger.debug("monte carlo: n=%d, seed=%d, blocks=%d, chunks=%d, threads=%d",
                 config.samples, config.seed, len(sizes), len(chunks), config.threads)

    def run_chunk(block_ids: Sequence[int]) -> List[Dict[str, np.ndarray]]:
        out = []
        for block in block_ids:
            points = draw_block(q, config.seed, block, sizes[block])
            values = {}
            for name in names:
                v = np.asarray(fns[name](points), dtype=float).reshape(-1)
                _check_finite(v, points, f"integrand '{name}'")
                values[name] = v
            out.append(values)
        return out

    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunk_results = list(pool.map(run_chunk, chunks))
    else:
        chunk_results = [run_chunk(c) for c in chunks]
    per_block = [values for chunk in chunk_results for values in chunk]

    n = config.samples
    results = {}
    for name in names:
        mean = math.fsum(float(np.sum(b[name])) for b in per_block) / n
        squares = math.fsum(float(np.sum((b[name] - mean) ** 2)) for b in per_block)
        stderr = math.sqrt(squares / (n - 1) / n)
        results[name] = ExpectationResult(
            value=mean,
            error=stderr,
            engine="monte_carlo",
            config=config.model_dump(),
            evaluations=n,
        )
    return results


def expect_mc(fn: Integrand, q, config: Optional[MonteCarloConfig] = None) -> ExpectationResult:
    """Monte Carlo mean and standard error of fn under q."""
    return expect_mc_many({"value": fn}, q, config)["value"]


def expect(fn: Integrand, q, engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """Dispatch to the engine selected by ``engine``."""
    if engine is None or isinstance(engine, QuadratureConfig):
        return expect_quadrature(fn, q, engine)
    if isinstance(engine, MonteCarloConfig):
        return expect_mc(fn, q, engine)
    raise EngineError(f"unknown engine configuration {engine!r}")


# ---------------- Finite differences ----------------

def gradient_step(x: np.ndarray) -> np.ndarray:
    return 1e-5 * (1.0 + np.abs(x))


def hessian_step(x: np.ndarray) -> np.ndarray:
    return 1e-4 * (1.0 + np.abs(x))


def _call_scalar(fn, x: np.ndarray) -> float:
    value = float(np.asarray(fn(x), dtype=float).reshape(-1)[0])
    if not math.isfinite(value):
        raise EngineError(f"non-finite function value at x={x.tolist()}")
    return value


def fd_gradient(fn: Callable, x, step: Optional[Callable] = None) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = (step or gradient_step)(x)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (_call_scalar(fn, x + e) - _call_scalar(fn, x - e)) / (2 * h[i])
    return grad


def fd_jacobian(fn: Callable, x, step: Optional[Callable] = None) -> np.ndarray:
    """Central-difference Jacobian of a vector function; row i is d fn_i / dx."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = (step or hessian_step)(x)
    columns = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        plus = np.asarray(fn(x + e), dtype=float).reshape(-1)
        minus = np.asarray(fn(x - e), dtype=float).reshape(-1)
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise EngineError(f"non-finite function value near x={x.tolist()}")
        columns.append((plus - minus) / (2 * h[j]))
    return np.column_stack(columns)


def fd_hessian(fn: Callable, x, step: Optional[Callable] = None) -> np.ndarray:
    """Central second differences of a scalar function, symmetrized."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = (step or hessian_step)(x)
    d = x.size
    hess = np.empty((d, d))
    f0 = _call_scalar(fn, x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        hess[i, i] = (_call_scalar(fn, x + ei) - 2 * f0 + _call_scalar(fn, x - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            hess[i, j] = (
                _call_scalar(fn, x + ei + ej) - _call_scalar(fn, x + ei - ej)
                - _call_scalar(fn, x - ei + ej) + _call_scalar(fn, x - ei - ej)
            ) / (4 * h[i] * h[j])
            hess[j, i] = hess[i, j]
    return 0.5 * (hess + hess.T)


def fd_laplacian(fn: Callable, x, step: Optional[Callable] = None) -> float:
    return float(np.trace(fd_hessian(fn, x, step)))


def relative_gap(approx, exact) -> float:
    """max |approx - exact| / max(1, |exact|), elementwise."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))
