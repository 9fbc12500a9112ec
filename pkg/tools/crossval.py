"""
Leave-one-out cross-validated risk for kernel density estimates.

For a symmetric estimator p_hat and a local scoring rule S,

    R_hat_n = (1/n) sum_i S(p_hat_{n,-i}, x_i)

is unbiased for R_{n-1} = E S(p_hat_{n-1}, q) = E E_q S(p_hat_{n-1}, .), the
modified risk that drops S(q, q). Kernel-based rules never read the
normalizing constant, so the leave-one-out fits need not be normalized.

Leave-one-out KDEs are reweightings of the full mixture (weight 0 on the held
out point); all n held-out jets are evaluated in one batch.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .densities import Density, KernelDensityEstimate, LogDensityJet, sample
from .divergences import expected_score
from .errors import CrossValidationError, ScoreError
from .numerics import EngineConfig, ExpectationResult
from .report_format import TableFormats
from .scores import ScoringRule

logger = logging.getLogger(__name__)

K_SIGMA = 5.0


def _as_samples(samples) -> np.ndarray:
    points = np.asarray(samples, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2:
        raise CrossValidationError(f"samples must be a list of points, got an array of shape {points.shape}")
    if len(points) < 2:
        raise CrossValidationError(f"leave-one-out needs at least 2 samples, got {len(points)}")
    if not np.all(np.isfinite(points)):
        raise CrossValidationError("samples contain non-finite coordinates")
    return points


def _check_rule(rule: ScoringRule) -> None:
    if not (rule.kernel_based or rule.kind in ("logarithmic", "blend")):
        raise CrossValidationError(f"rule '{rule.name}' is not a local scoring rule")


def held_out_scores(rule: ScoringRule, samples, bandwidth: float, unnormalized_factor: float = 1.0) -> np.ndarray:
    """S(p_hat_{n,-i}, x_i) for every i."""
    _check_rule(rule)
    points = _as_samples(samples)
    if not bandwidth > 0:
        raise CrossValidationError(f"bandwidth must be positive, got {bandwidth}")
    if not unnormalized_factor > 0:
        raise CrossValidationError(f"normalizing factor must be positive, got {unnormalized_factor}")
    estimate = KernelDensityEstimate(points, bandwidth)
    jet = estimate.leave_one_out_jets()
    if unnormalized_factor != 1.0:
        jet = LogDensityJet(jet.log_density + math.log(unnormalized_factor), jet.grad, jet.hess)
    scores = rule.evaluate_local(points, jet)
    bad = ~np.isfinite(scores)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise ScoreError(f"non-finite held-out score at x={points[index].tolist()} (h={bandwidth})")
    return scores


def cross_validated_risk(rule: ScoringRule, samples, bandwidth: float, unnormalized_factor: float = 1.0) -> float:
    """(1/n) sum_i S(kde(samples without i, bandwidth), x_i)."""
    scores = held_out_scores(rule, samples, bandwidth, unnormalized_factor)
    return math.fsum(scores.tolist()) / len(scores)


def modified_risk(rule: ScoringRule, p: Density, q: Density, engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """E_q S(p, .), without subtracting S(q, q)."""
    return expected_score(rule, p, q, engine)


def reference_risk(rule: ScoringRule, samples, bandwidth: float, q: Density,
                   engine: Optional[EngineConfig] = None) -> ExpectationResult:
    """Average over the n leave-one-out fits of their modified risk under q."""
    points = _as_samples(samples)
    estimate = KernelDensityEstimate(points, bandwidth)
    results = [modified_risk(rule, estimate.leave_one_out(i), q, engine) for i in range(len(points))]
    n = len(results)
    return ExpectationResult(
        value=math.fsum(r.value for r in results) / n,
        error=math.fsum(r.error for r in results) / n,
        engine=results[0].engine,
        config=results[0].config,
        evaluations=sum(r.evaluations for r in results),
    )


# ---------------- Bandwidth selection ----------------

@dataclass(frozen=True)
class CvReport:
    """
    Cross-validated risk per bandwidth. The selected bandwidth is the first
    minimizer on the ascending grid, so ties go to the smaller bandwidth.
    """

    rule: str
    n: int
    bandwidths: List[float]
    risks: List[float]
    selected: float
    reference: Optional[List[float]] = None
    reference_errors: Optional[List[float]] = None

    @property
    def selected_index(self) -> int:
        return self.bandwidths.index(self.selected)

    def rows(self) -> List[Dict]:
        rows = []
        for i, (h, risk) in enumerate(zip(self.bandwidths, self.risks)):
            rows.append({
                "bandwidth": h,
                "cv_risk": risk,
                "reference_risk": self.reference[i] if self.reference else None,
                "reference_error": self.reference_errors[i] if self.reference_errors else None,
                "selected": h == self.selected,
            })
        return rows


def _check_grid(grid: Sequence[float]) -> List[float]:
    grid = [float(h) for h in grid]
    if not grid:
        raise CrossValidationError("bandwidth grid is empty")
    if any(not h > 0 for h in grid):
        raise CrossValidationError(f"bandwidths must be positive, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise CrossValidationError("bandwidth grid must be sorted ascending without repeats")
    return grid


def select_bandwidth(rule: ScoringRule, samples, grid: Sequence[float], true_density: Optional[Density] = None,
                     engine: Optional[EngineConfig] = None) -> CvReport:
    grid = _check_grid(grid)
    points = _as_samples(samples)
    risks = [cross_validated_risk(rule, points, h) for h in grid]
    selected = grid[int(np.argmin(risks))]
    logger.info("bandwidth selection (%s, n=%d): h=%.6g", rule.name, len(points), selected)

    reference = reference_errors = None
    if true_density is not None:
        results = [reference_risk(rule, points, h, true_density, engine) for h in grid]
        reference = [r.value for r in results]
        reference_errors = [r.error for r in results]
    return CvReport(
        rule=rule.name,
        n=len(points),
        bandwidths=grid,
        risks=risks,
        selected=selected,
        reference=reference,
        reference_errors=reference_errors,
    )


# ---------------- Replications ----------------

@dataclass(frozen=True)
class ReplicationReport:
    """Paired replications of R_hat_n and its leave-one-out reference."""

    rule: str
    n: int
    bandwidth: float
    replications: int
    cv_risks: List[float] = field(repr=False)
    references: List[float] = field(repr=False)
    quadrature_error: float
    k_sigma: float = K_SIGMA

    @staticmethod
    def _mean_stderr(values: Sequence[float]):
        values = np.asarray(values, dtype=float)
        mean = math.fsum(values.tolist()) / len(values)
        stderr = math.sqrt(math.fsum(((values - mean) ** 2).tolist()) / (len(values) - 1) / len(values))
        return mean, stderr

    @property
    def cv(self):
        return self._mean_stderr(self.cv_risks)

    @property
    def reference(self):
        return self._mean_stderr(self.references)

    @property
    def difference(self):
        return self._mean_stderr([a - b for a, b in zip(self.cv_risks, self.references)])

    @property
    def passed(self) -> bool:
        mean, stderr = self.difference
        return abs(mean) <= self.k_sigma * stderr + self.quadrature_error

    def to_dict(self) -> Dict:
        cv_mean, cv_stderr = self.cv
        ref_mean, ref_stderr = self.reference
        diff_mean, diff_stderr = self.difference
        return {
            "rule": self.rule,
            "n": self.n,
            "bandwidth": self.bandwidth,
            "replications": self.replications,
            "cv_mean": cv_mean,
            "cv_stderr": cv_stderr,
            "reference_mean": ref_mean,
            "reference_stderr": ref_stderr,
            "mean_difference": diff_mean,
            "difference_stderr": diff_stderr,
            "quadrature_error": self.quadrature_error,
            "passed": self.passed,
        }


def replication_seeds(seed: int, replications: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(replications)]


def replication_experiment(rule: ScoringRule, q: Density, n: int, bandwidth: float, replications: int,
                           seed: int = 0, engine: Optional[EngineConfig] = None,
                           k_sigma: float = K_SIGMA) -> ReplicationReport:
    """
    Draw ``replications`` samples of size n from q; for each, record R_hat_n and
    the average modified risk of its leave-one-out fits. Both are unbiased for
    R_{n-1}, so their paired difference has mean zero.
    """
    if replications < 2:
        raise CrossValidationError(f"need at least 2 replications, got {replications}")
    if n < 2:
        raise CrossValidationError(f"need at least 2 samples per replication, got {n}")
    cv_risks, references, errors = [], [], []
    for r, rep_seed in enumerate(replication_seeds(seed, replications)):
        points = sample(q, n, rep_seed)
        cv_risks.append(cross_validated_risk(rule, points, bandwidth))
        ref = reference_risk(rule, points, bandwidth, q, engine)
        references.append(ref.value)
        errors.append(ref.tolerance(k_sigma))
        logger.debug("replication %d: cv=%.6g reference=%.6g", r, cv_risks[-1], ref.value)
    report = ReplicationReport(
        rule=rule.name,
        n=n,
        bandwidth=float(bandwidth),
        replications=replications,
        cv_risks=cv_risks,
        references=references,
        quadrature_error=math.fsum(errors) / len(errors),
        k_sigma=k_sigma,
    )
    logger.info("replications (%s, n=%d, h=%.6g): passed=%s", rule.name, n, bandwidth, report.passed)
    return report


# ---------------- Files ----------------

def read_samples(path: Union[str, Path]) -> np.ndarray:
    """
    One point per line, coordinates separated by commas. Blank lines and lines
    starting with '#' are skipped; a non-numeric first row is a header.
    """
    path = Path(path)
    rows: List[List[float]] = []
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            for line_no, row in enumerate(csv.reader(handle), start=1):
                cells = [c.strip() for c in row]
                if not cells or all(not c for c in cells) or cells[0].startswith("#"):
                    continue
                try:
                    rows.append([float(c) for c in cells])
                except ValueError:
                    if not rows and line_no == 1:
                        continue
                    raise CrossValidationError(f"{path}:{line_no}: non-numeric sample row {row}")
    except (OSError, UnicodeDecodeError) as exc:
        raise CrossValidationError(f"{path}: cannot read samples ({exc})") from exc
    if not rows:
        raise CrossValidationError(f"{path}: no samples")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CrossValidationError(f"{path}: rows have different numbers of coordinates {sorted(widths)}")
    return np.array(rows, dtype=float)


def write_cv_report(report: CvReport, path: Union[str, Path]) -> Path:
    return TableFormats.write_csv(report.rows(), "bandwidth", path)
