"""
Experiment runner behind the command line.

Each public action takes a validated config and returns a result dict:
``{"success": True, "experiment": ..., "rows": [...], "checks": {...}, "passed": bool}``
on success, or ``{"success": False, "error": ..., "module": ..., "operation": ...}``
when a library error stops the computation.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import config as cfg
from .crossval import cross_validated_risk, replication_experiment, read_samples, select_bandwidth
from .densities import (
    Density,
    gaussian,
    gaussian_mixture,
    kde,
    logistic_product,
    mixture_path,
    sample,
    unnormalized,
)
from .divergences import (
    bregman_divergence,
    divergence_integrand,
    divergence_via_integrand,
    expected_score,
    hyvarinen_divergence,
    zero_mean_diagnostic,
)
from .errors import (
    ConfigError,
    CrossValidationError,
    DensityError,
    EngineError,
    KernelError,
    ScoreError,
    ScoringRulesError,
    SureModelError,
)
from .kernels import (
    PathConcavityReport,
    hyvarinen_profile,
    kernel_by_name,
    logcosh_profile,
    phi_path_concavity,
    radial_kernel,
)
from .numerics import (
    MonteCarloConfig,
    QuadratureConfig,
    agree,
    fd_gradient,
    fd_jacobian,
    relative_gap,
)
from .report_format import TableFormats
from .scores import ScoringRule, general_score, hyvarinen_rule, hyvarinen_score, log_rule, radial_score
from .sure import (
    identity_estimator,
    linear_shrinkage,
    posterior_mean_estimator,
    prior_marginal,
    quadratic_risk_mc,
    shift_model,
    sure_log_form,
    unbiasedness_experiment,
    zero_estimator,
)

logger = logging.getLogger(__name__)

ERROR_MODULES = {
    DensityError: "densities",
    KernelError: "kernels",
    ScoreError: "scores",
    EngineError: "numerics",
    SureModelError: "sure",
    CrossValidationError: "crossval",
}

SCORE_IDENTITY_TOL = 1e-10
SCORE_GENERAL_TOL = 1e-9
SURE_IDENTITY_TOL = 1e-12
INTEGRAND_FLOOR = -1e-10
GRADIENT_TOL = 1e-5
HESSIAN_TOL = 1e-4


def _module_of(exc: ScoringRulesError) -> str:
    for cls in type(exc).__mro__:
        if cls in ERROR_MODULES:
            return ERROR_MODULES[cls]
    return "tools"


# ---------------- Check-suite fixtures ----------------

@dataclass(frozen=True)
class SuiteProfile:
    name: str
    identity_points: int
    sure_samples: int
    risk_samples: int
    integrand_points: int
    replications: int
    derivative_points: int
    route_dims: Tuple[int, ...]
    quadrature_2d: QuadratureConfig


PROFILES = {
    "quick": SuiteProfile("quick", 200, 100_000, 100_000, 2_000, 40, 20, (1,), QuadratureConfig(nodes_per_axis=161)),
    "full": SuiteProfile("full", 1_000, 1_000_000, 1_000_000, 10_000, 200, 100, (1, 2), QuadratureConfig()),
}


def reference_densities(dim: int) -> Dict[str, Density]:
    """Gaussian and mixture fixtures used for divergence grids."""
    e1 = np.eye(dim)[0]
    return {
        "standard": gaussian(np.zeros(dim)),
        "shifted": gaussian(e1, 0.5),
        "mixture": gaussian_mixture([0.3, 0.7], [-e1, 1.5 * e1], [np.eye(dim), 0.6 * np.eye(dim)]),
    }


def random_densities(rng: np.random.Generator, count: int) -> List[Density]:
    """Gaussians, mixtures, logistic products and small KDEs in d = 1, 2."""
    out: List[Density] = []
    for i in range(count):
        dim = 1 + i % 2
        kind = (i // 2) % 4
        if kind == 0:
            a = 0.5 * rng.standard_normal((dim, dim))
            out.append(gaussian(rng.standard_normal(dim), a @ a.T + 0.5 * np.eye(dim)))
        elif kind == 1:
            weights = rng.dirichlet(np.ones(3))
            means = [1.5 * rng.standard_normal(dim) for _ in range(3)]
            covs = [rng.uniform(0.4, 1.5) * np.eye(dim) for _ in range(3)]
            out.append(gaussian_mixture(weights, means, covs))
        elif kind == 2:
            out.append(logistic_product(rng.standard_normal(dim), rng.uniform(0.5, 2.0, dim)))
        else:
            out.append(kde(rng.standard_normal((5, dim)), rng.uniform(0.3, 1.0)))
    return out


def _probe_points(rng: np.random.Generator, dim: int, count: int, spread: float = 2.0) -> np.ndarray:
    return spread * rng.standard_normal((count, dim))


def _row(check: str, passed: bool, worst: float, tolerance: float, detail: str = "") -> Dict:
    return {"check": check, "passed": bool(passed), "worst": float(worst), "tolerance": float(tolerance), "detail": detail}


# ---------------- Checks ----------------

def check_score_identity(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    """Hyvarinen score through the radial and general code paths, plus logcosh radial vs general."""
    rng = np.random.default_rng(seed)
    densities = random_densities(rng, 10)
    per_density = max(1, profile.identity_points // len(densities))
    radial_gap = general_gap = logcosh_gap = 0.0
    for density in densities:
        points = _probe_points(rng, density.dim, per_density)
        reference = hyvarinen_score(density, points)
        radial_gap = max(radial_gap, relative_gap(radial_score(hyvarinen_profile(), density, points), reference))
        general = general_score(radial_kernel(hyvarinen_profile(), density.dim), density, points)
        general_gap = max(general_gap, relative_gap(general, reference))
        logcosh = logcosh_profile()
        logcosh_gap = max(logcosh_gap, relative_gap(
            general_score(radial_kernel(logcosh, density.dim), density, points),
            radial_score(logcosh, density, points)))
    count = per_density * len(densities)
    return [
        _row("score_identity_radial", radial_gap <= SCORE_IDENTITY_TOL, radial_gap, SCORE_IDENTITY_TOL, f"{count} points"),
        _row("score_identity_general", general_gap <= SCORE_GENERAL_TOL, general_gap, SCORE_GENERAL_TOL, f"{count} points"),
        _row("score_identity_logcosh", logcosh_gap <= SCORE_GENERAL_TOL, logcosh_gap, SCORE_GENERAL_TOL, f"{count} points"),
    ]


def check_sure_identity(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for density in random_densities(rng, 8):
        points = _probe_points(rng, density.dim, 25)
        worst = max(worst, relative_gap(sure_log_form(density, points), hyvarinen_score(density, points) + density.dim))
    return [_row("sure_log_form_identity", worst <= SURE_IDENTITY_TOL, worst, SURE_IDENTITY_TOL)]


def _thetas(dim: int) -> List[np.ndarray]:
    return [np.zeros(dim), np.eye(dim)[0]]


def check_sure_unbiasedness(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    """Posterior mean under a N(0, I) prior, d in {1, 2}, theta in {0, e1}."""
    rows = []
    for dim in (1, 2):
        f = prior_marginal(gaussian(np.zeros(dim)))
        quadrature = QuadratureConfig() if dim == 1 else profile.quadrature_2d
        for theta in _thetas(dim):
            report = unbiasedness_experiment(f, theta, profile.sure_samples, seed, threads, quadrature)
            z = abs(report.difference.value) / report.difference.error if report.difference.error else 0.0
            rows.append(_row(
                f"sure_unbiased_d{dim}_theta{'0' if not theta.any() else 'e1'}",
                report.passed, z, 5.0,
                f"sure={report.sure.value:.6g} risk={report.risk.value:.6g} d_hs={report.reference.value:.6g}",
            ))
    return rows


def check_risk_equals_distance(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rows = []
    for dim in (1, 2):
        e1 = np.eye(dim)[0]
        priors = {
            "gaussian": gaussian(np.zeros(dim)),
            "mixture": gaussian_mixture([0.5, 0.5], [-e1, e1], [np.eye(dim), np.eye(dim)]),
        }
        quadrature = QuadratureConfig() if dim == 1 else profile.quadrature_2d
        for name, prior in priors.items():
            f = prior_marginal(prior)
            estimator = posterior_mean_estimator(f)
            for theta in _thetas(dim):
                risk = quadratic_risk_mc(estimator, theta, profile.risk_samples, seed, threads)
                distance = hyvarinen_divergence(f, shift_model(theta), quadrature).expectation
                gap = abs(risk.value - distance.value)
                tol = risk.tolerance() + distance.tolerance()
                rows.append(_row(
                    f"risk_equals_distance_{name}_d{dim}_theta{'0' if not theta.any() else 'e1'}",
                    agree(risk, distance), gap, tol,
                    f"risk={risk.value:.6g} d_hs={distance.value:.6g}",
                ))
    return rows


def check_route_equivalence(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    """Expected-score and integrand routes to d_S over a 3x3 grid of pairs, plus nonnegativity."""
    rows = []
    for dim in profile.route_dims:
        engine = QuadratureConfig() if dim == 1 else profile.quadrature_2d
        fixtures = reference_densities(dim)
        for kernel_name in ("hyvarinen", "logcosh"):
            kernel = kernel_by_name(kernel_name, dim)
            rule = ScoringRule(kind="general", kernel=kernel)
            worst_gap, worst_ratio, passed, negative_ok, self_ok = 0.0, 0.0, True, True, True
            for p_name, p in fixtures.items():
                for q_name, q in fixtures.items():
                    a = bregman_divergence(rule, p, q, engine)
                    b = divergence_via_integrand(kernel, p, q, engine)
                    tol = a.error + b.error
                    gap = abs(a.value - b.value)
                    worst_gap = max(worst_gap, gap)
                    worst_ratio = max(worst_ratio, gap / tol if tol else (0.0 if gap == 0 else math.inf))
                    passed &= gap <= tol
                    negative_ok &= a.value >= -a.error and b.value >= -b.error
                    if p_name == q_name:
                        self_ok &= abs(a.value) <= a.error and abs(b.value) <= b.error
            rows.append(_row(f"route_equivalence_{kernel_name}_d{dim}", passed, worst_ratio, 1.0,
                             f"max |expected-score - integrand| = {worst_gap:.3g}"))
            rows.append(_row(f"divergence_nonnegative_{kernel_name}_d{dim}", negative_ok and self_ok, 0.0, 0.0,
                             "d_S(p,q) >= -error and d_S(p,p) = 0 within error"))

    # hyvarinen, N(1,1) vs N(0,1): both routes give 1
    kernel = kernel_by_name("hyvarinen", 1)
    p, q = gaussian([1.0]), gaussian([0.0])
    a = bregman_divergence(ScoringRule(kind="general", kernel=kernel), p, q)
    b = divergence_via_integrand(kernel, p, q)
    ok = agree(a.expectation, 1.0) and agree(b.expectation, 1.0)
    rows.append(_row("route_value_unit_shift", ok, max(abs(a.value - 1.0), abs(b.value - 1.0)),
                     max(a.error, b.error), "hyvarinen, N(1,1) vs N(0,1)"))
    return rows


def check_integrand_nonnegative(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for kernel_name in ("hyvarinen", "logcosh"):
        worst = math.inf
        pairs = 0
        for dim in (1, 2):
            kernel = kernel_by_name(kernel_name, dim)
            fixtures = list(reference_densities(dim).values())
            combos = [(p, q) for p in fixtures for q in fixtures if p is not q]
            per_pair = max(1, profile.integrand_points // (2 * len(combos)))
            for p, q in combos:
                values = divergence_integrand(kernel, p, q, _probe_points(rng, dim, per_pair, 3.0))
                worst = min(worst, float(np.min(values)))
                pairs += 1
        rows.append(_row(f"integrand_nonnegative_{kernel_name}", worst >= INTEGRAND_FLOOR, worst, INTEGRAND_FLOOR,
                         f"{pairs} density pairs"))
    return rows


def check_normalization_invariance(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rng = np.random.default_rng(seed)
    rules = [hyvarinen_rule(), ScoringRule(kind="radial", profile=logcosh_profile()),
             ScoringRule(kind="general", kernel=kernel_by_name("logcosh", 1))]
    p = reference_densities(1)["mixture"]
    q = reference_densities(1)["standard"]
    points = _probe_points(rng, 1, 50)
    samples = sample(q, 30, seed)
    identical = True
    for c in (0.1, 10.0):
        scaled = unnormalized(p, c)
        for rule in rules:
            identical &= np.array_equal(rule.score(scaled, points), rule.score(p, points))
            identical &= bregman_divergence(rule, scaled, q).value == bregman_divergence(rule, p, q).value
            identical &= (cross_validated_risk(rule, samples, 0.5, unnormalized_factor=c)
                          == cross_validated_risk(rule, samples, 0.5))
    contrast = log_rule().score(unnormalized(p, 10.0), 0.0) != log_rule().score(p, 0.0)
    return [_row("normalization_invariance", identical and contrast, 0.0, 0.0,
                 "scores, divergences and CV risks bit-identical for c in {0.1, 10}")]


def _paths() -> List[Tuple[str, Density, Density]]:
    return [
        ("shift", gaussian([0.0]), gaussian([2.0])),
        ("scale", gaussian([0.0]), gaussian([0.0], 4.0)),
        ("mixture", gaussian([0.0]), gaussian_mixture([0.5, 0.5], [[-1.5], [1.5]], [0.5, 0.5])),
        ("logistic", logistic_product([0.0], [1.0]), gaussian([1.0])),
        ("mixture-gauss", gaussian_mixture([0.3, 0.7], [[-1.0], [1.0]], [1.0, 0.6]), gaussian([1.0], 0.5)),
    ]


PHI_T_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@lru_cache(maxsize=None)
def _phi_path_reports(kernel_name: str) -> Tuple[Tuple[str, PathConcavityReport], ...]:
    kernel = kernel_by_name(kernel_name, 1)
    return tuple((name, phi_path_concavity(kernel, q, p, PHI_T_GRID)) for name, q, p in _paths())


def phi_path_rows(kernel_names=("hyvarinen", "logcosh", "convex_quadratic")) -> List[Dict]:
    """Per-path Phi values behind the phi_concavity check."""
    rows = []
    for kernel_name in kernel_names:
        for path, report in _phi_path_reports(kernel_name):
            rows.extend({"kernel": kernel_name, "path": path, **row} for row in report.rows())
    return rows


def check_phi_concavity(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rows = []
    for kernel_name in ("hyvarinen", "logcosh"):
        reports = [report for _, report in _phi_path_reports(kernel_name)]
        worst = max(max(r.second_differences) for r in reports)
        rows.append(_row(f"phi_concave_{kernel_name}", all(r.concave for r in reports), worst,
                         max(max(r.tolerances) for r in reports), f"{len(reports)} mixture paths"))
    reports = [report for _, report in _phi_path_reports("convex_quadratic")]
    found = any(d > tol for r in reports for d, tol in zip(r.second_differences, r.tolerances))
    worst = max(max(r.second_differences) for r in reports)
    rows.append(_row("phi_convex_counterexample", found, worst, 0.0, "diagnostic: psi(t) = t^2"))
    return rows


def check_cv_unbiasedness(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rows = []
    for rule in (hyvarinen_rule(), log_rule()):
        report = replication_experiment(rule, gaussian([0.0]), 50, 0.5, profile.replications, seed)
        mean, stderr = report.difference
        z = abs(mean) / stderr if stderr else 0.0
        rows.append(_row(f"cv_unbiasedness_{rule.name}", report.passed, z, report.k_sigma,
                         f"cv={report.cv[0]:.6g} reference={report.reference[0]:.6g} R={report.replications}"))
    return rows


def check_derivative_oracles(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    rng = np.random.default_rng(seed)
    densities = random_densities(rng, 8)
    densities += [
        mixture_path(gaussian([0.0]), logistic_product([1.0], [0.7]), 0.4),
        unnormalized(gaussian([0.5, -0.5], 0.8), 10.0),
    ]
    grad_gap = hess_gap = 0.0
    for density in densities:
        for point in _probe_points(rng, density.dim, profile.derivative_points, 1.5):
            grad_gap = max(grad_gap, relative_gap(fd_gradient(density.log_density, point), density.grad_log_density(point)))
            hess_gap = max(hess_gap, relative_gap(fd_jacobian(density.grad_log_density, point), density.hess_log_density(point)))

    kernels = [kernel_by_name(name, dim) for name in ("hyvarinen", "logcosh", "convex_quadratic", "zero") for dim in (1, 2)]
    kernels.append(kernel_by_name("logcosh", 2, scale=0.5))
    kgrad_gap = khess_gap = 0.0
    for kernel in kernels:
        for y in _probe_points(rng, kernel.dim, profile.derivative_points, 3.0):
            kgrad_gap = max(kgrad_gap, relative_gap(fd_gradient(lambda v: kernel.value(None, v), y), kernel.grad_y(None, y)))
            khess_gap = max(khess_gap, relative_gap(fd_jacobian(lambda v: kernel.grad_y(None, v), y), kernel.hess_y(None, y)))
    return [
        _row("density_gradient_fd", grad_gap <= GRADIENT_TOL, grad_gap, GRADIENT_TOL, f"{len(densities)} densities"),
        _row("density_hessian_fd", hess_gap <= HESSIAN_TOL, hess_gap, HESSIAN_TOL, f"{len(densities)} densities"),
        _row("kernel_gradient_fd", kgrad_gap <= GRADIENT_TOL, kgrad_gap, GRADIENT_TOL, f"{len(kernels)} kernels"),
        _row("kernel_hessian_fd", khess_gap <= HESSIAN_TOL, khess_gap, HESSIAN_TOL, f"{len(kernels)} kernels"),
    ]


def check_zero_mean(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    worst, passed = 0.0, True
    for q in reference_densities(1).values():
        for kernel_name in ("hyvarinen", "logcosh"):
            result = zero_mean_diagnostic(kernel_by_name(kernel_name, 1), q)
            worst = max(worst, abs(result.value))
            passed &= agree(result, 0.0, extra=1e-12)
    return [_row("zero_mean_boundary_term", passed, worst, 1e-12, "quadrature, d=1")]


def check_engine_agreement(profile: SuiteProfile, seed: int, threads: int) -> List[Dict]:
    p, q = gaussian([0.5], 1.5), gaussian([0.0])
    rule = hyvarinen_rule()
    quad = expected_score(rule, p, q, QuadratureConfig())
    mc = expected_score(rule, p, q, MonteCarloConfig(samples=profile.risk_samples, seed=seed, threads=threads))
    return [_row("engine_agreement", agree(quad, mc), abs(quad.value - mc.value), quad.tolerance() + mc.tolerance(),
                 f"quadrature={quad.value:.6g} monte_carlo={mc.value:.6g}")]


CHECKS: Dict[str, Callable[[SuiteProfile, int, int], List[Dict]]] = {
    "score_identity": check_score_identity,
    "sure_identity": check_sure_identity,
    "sure_unbiasedness": check_sure_unbiasedness,
    "risk_equals_distance": check_risk_equals_distance,
    "route_equivalence": check_route_equivalence,
    "integrand_nonnegative": check_integrand_nonnegative,
    "normalization_invariance": check_normalization_invariance,
    "phi_concavity": check_phi_concavity,
    "cv_unbiasedness": check_cv_unbiasedness,
    "derivative_oracles": check_derivative_oracles,
    "zero_mean": check_zero_mean,
    "engine_agreement": check_engine_agreement,
}


# ---------------- Runner ----------------

class ExperimentRunner:
    """
    Runs one experiment per call and reports in result dicts.
    """

    ACTIONS = {
        "score-eval": "score_eval",
        "divergence-table": "divergence_table",
        "sure-experiment": "sure_experiment",
        "bandwidth": "bandwidth",
        "check-suite": "check_suite",
    }

    def run(self, config) -> Dict:
        action = self.ACTIONS[config.experiment]
        try:
            result = getattr(self, "_" + action)(config)
        except ScoringRulesError as exc:
            module = _module_of(exc)
            logger.error("%s failed in %s: %s", action, module, exc)
            return {
                "success": False,
                "experiment": config.experiment,
                "module": module,
                "operation": action,
                "error": f"{module}.{action}: {exc}",
            }
        result = {"success": True, "experiment": config.experiment, **result}
        result.setdefault("checks", {})
        result["passed"] = all(result["checks"].values())
        return result

    def _run_as(self, experiment: str, config) -> Dict:
        if config.experiment != experiment:
            raise ConfigError(f"{self.ACTIONS[experiment]} needs a {experiment} config, got {config.experiment}",
                              "experiment")
        return self.run(config)

    def score_eval(self, config: cfg.ScoreEvalConfig) -> Dict:
        return self._run_as("score-eval", config)

    def divergence_table(self, config: cfg.DivergenceTableConfig) -> Dict:
        return self._run_as("divergence-table", config)

    def sure_experiment(self, config: cfg.SureExperimentConfig) -> Dict:
        return self._run_as("sure-experiment", config)

    def bandwidth(self, config: cfg.BandwidthConfig) -> Dict:
        return self._run_as("bandwidth", config)

    def check_suite(self, config: cfg.CheckSuiteConfig) -> Dict:
        return self._run_as("check-suite", config)

    # ---------- implementations ----------

    def _score_eval(self, config: cfg.ScoreEvalConfig) -> Dict:
        density = config.density.build()
        rows = []
        for spec in config.rules:
            rule = spec.build(density.dim)
            values = rule.score(density, np.asarray(config.points, dtype=float))
            for point, value in zip(config.points, np.atleast_1d(values)):
                rows.append({
                    "density": density.describe(),
                    "rule": rule.name,
                    "x": list(point),
                    "score": float(value),
                    "propriety_guaranteed": rule.propriety_guaranteed,
                })
        return {"table": "score-eval", "rows": rows}

    def _divergence_table(self, config: cfg.DivergenceTableConfig) -> Dict:
        rows, checks = [], {}
        for index, pair in enumerate(config.pairs):
            p, q = pair.p.build(), pair.q.build()
            for kernel_name in config.kernels:
                kernel = kernel_by_name(kernel_name, p.dim, config.scale)
                rule = cfg.RuleSpec(kind="general", kernel=kernel_name, scale=config.scale).build(p.dim)
                by_route = {}
                if "expected-score" in config.routes:
                    by_route["expected-score"] = bregman_divergence(rule, p, q, config.engine)
                if "integrand" in config.routes:
                    by_route["integrand"] = divergence_via_integrand(kernel, p, q, config.engine)
                if "closed-form" in config.routes and kernel_name == "hyvarinen":
                    by_route["closed-form"] = hyvarinen_divergence(p, q, config.engine)
                for result in by_route.values():
                    rows.append({**result.to_dict(), "kernel": kernel_name})

                # no claims for kernels that are not concave
                if not rule.propriety_guaranteed:
                    continue
                results = list(by_route.values())
                key = f"pair{index}:{kernel_name}"
                for a, b in zip(results, results[1:]):
                    checks[f"{key}:{a.method}~{b.method}"] = agree(a.expectation, b.expectation, config.k_sigma)
                for result in results:
                    checks[f"{key}:{result.method}:nonnegative"] = result.value >= -result.tolerance(config.k_sigma)
        return {"table": "divergence-table", "rows": rows, "checks": checks}

    def _estimator(self, config: cfg.SureExperimentConfig):
        if config.estimator == "posterior_mean":
            f = config.marginal.build() if config.marginal is not None else prior_marginal(config.prior.build())
            return posterior_mean_estimator(f)
        if config.estimator == "identity":
            return identity_estimator(config.dim)
        if config.estimator == "zero":
            return zero_estimator(config.dim)
        return linear_shrinkage(config.dim, config.shrinkage)

    def _sure_experiment(self, config: cfg.SureExperimentConfig) -> Dict:
        estimator = self._estimator(config)
        rows, checks = [], {}
        for index, theta in enumerate(config.thetas):
            report = unbiasedness_experiment(estimator, theta, config.samples, config.seed, config.threads,
                                             config.quadrature, config.k_sigma)
            rows.append(report.to_dict())
            for name, ok in report.checks.items():
                checks[f"theta{index}:{name}"] = ok
        return {"table": "sure-experiment", "rows": rows, "checks": checks}

    def _bandwidth(self, config: cfg.BandwidthConfig) -> Dict:
        q = config.true_density.build() if config.true_density is not None else None
        if config.samples_path is not None:
            samples = read_samples(config.samples_path)
        else:
            samples = sample(q, config.n, config.seed)
        rule = config.rule.build(samples.shape[1])
        report = select_bandwidth(rule, samples, config.grid, q, config.engine)
        result = {"table": "bandwidth", "rows": report.rows(), "checks": {}, "selected": report.selected}
        if report.reference is not None:
            # selected fit is no worse than the worse of its grid neighbours
            i = report.selected_index
            neighbors = report.reference[max(0, i - 1):i] + report.reference[i + 1:i + 2]
            result["near_oracle"] = not neighbors or report.reference[i] <= max(neighbors)
        if config.replications:
            replication = replication_experiment(rule, q, config.replication_n, config.replication_bandwidth,
                                                 config.replications, config.seed, config.engine, config.k_sigma)
            result["extra_tables"] = {"replication": [replication.to_dict()]}
            result["checks"]["cv_unbiasedness"] = replication.passed
        return result

    def _check_suite(self, config: cfg.CheckSuiteConfig) -> Dict:
        profile = PROFILES[config.profile]
        names = config.checks or list(CHECKS)
        rows = []
        for name in names:
            logger.info("check-suite (%s): %s", profile.name, name)
            rows.extend(CHECKS[name](profile, config.seed, config.threads))
        checks = {row["check"]: row["passed"] for row in rows}
        result = {"table": "check-suite", "rows": rows, "checks": checks}
        if "phi_concavity" in names:
            result["extra_tables"] = {"phi-path": phi_path_rows()}
        return result

    @staticmethod
    def summarize(result: Dict) -> str:
        if not result.get("success"):
            return f"error: {result.get('error')}"
        table = result["table"]
        lines = [TableFormats.to_markdown(result["rows"], table), "", TableFormats.summary_line(table, result)]
        failed = [name for name, ok in result.get("checks", {}).items() if not ok]
        if failed:
            lines.append("failed checks: " + ", ".join(failed))
        return "\n".join(lines)
