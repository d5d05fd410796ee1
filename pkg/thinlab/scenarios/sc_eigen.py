"""First Dirichlet eigenvalue of a named shape, with optional monotonicity, phi and certificate checks"""
import logging
import math
from typing import Optional

from scipy.special import jn_zeros

from thinlab.models.geometry import Point2
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.dirichlet_service import DirichletService
from thinlab.services.monitoring_service import MonitoringService

DEFAULTS = {
    "shape": "unit-square",
    "h": "1/256",
    "method": "grid",
    "tolerance": "",
    "x0": "",
    "n": "100000",
    "dt": "2e-4",
    "t_grid": "0.05,0.1,0.15,0.2,0.25,0.3",
    "stochastic_tolerance": "0.1",
    "monotone_pairs": "0",
    "phi_lambda": "0",
    "phi_margin": "0.1",
    "phi_ratio_min": "3.5",
    "certificate_trials": "0",
}

GREEN_GAP_RTOL = 1e-4

BESSEL_J0_ROOT_SQ = float(jn_zeros(0, 1)[0]) ** 2

# closed-form lambda1 and default relative tolerance per shape
REFERENCE_VALUES = {
    "unit-square": (2.0 * math.pi ** 2, 0.01),
    "rectangle-1x2": (1.25 * math.pi ** 2, 0.01),
    "unit-disc": (BESSEL_J0_ROOT_SQ, 0.02),
    "two-discs": (BESSEL_J0_ROOT_SQ, 0.02),
}

SHAPE_CENTRES = {
    "unit-square": (0.5, 0.5),
    "rectangle-1x2": (0.5, 1.0),
    "unit-disc": (0.0, 0.0),
    "two-discs": (-1.5, 0.0),
}


def monotone_violations(dirichlet: DirichletService, rng: RngSpec, pairs: int, h: float = 1 / 64) -> int:
    """Random nested (rectangle, inscribed disc or rectangle) pairs where lambda1 of the inner set is smaller."""
    geometry = dirichlet.geometry_service
    gen = rng.generator()
    violations = 0
    for _ in range(pairs):
        x0, y0 = gen.uniform(-0.3, 0.3, size=2)
        width, height = gen.uniform(0.6, 1.2, size=2)
        outer = geometry.rectangle(x0, x0 + width, y0, y0 + height, h)
        shrink = gen.uniform(0.05, 0.25, size=4) * min(width, height)
        if gen.random() < 0.5:
            inner = geometry.rectangle(x0 + shrink[0], x0 + width - shrink[1],
                                       y0 + shrink[2], y0 + height - shrink[3], h)
        else:
            radius = 0.5 * min(width, height) - float(shrink.max())
            inner = geometry.disc(Point2(x0 + width / 2, y0 + height / 2), radius, h)
        lam_outer = dirichlet.lambda1_grid(outer).lambda1
        lam_inner = dirichlet.lambda1_grid(inner).lambda1
        if lam_inner < lam_outer * (1 - 1e-9):
            violations += 1
            logging.error(f"monotone_violations: inner {lam_inner} < outer {lam_outer}")
    return violations


def certificate_violations(dirichlet: DirichletService, rng: RngSpec, trials: int,
                           h: float = 1 / 32) -> tuple[int, int, list[tuple]]:
    """Random (domain, psi, lam) triples checked against the grid eigenfunction.

    A certified triple is a violation when lam > 1.02 lambda1 or when its Green-identity
    gap is negative beyond GREEN_GAP_RTOL * lambda1.

    Returns:
        tuple: (certified count, violation count, one row per trial)
    """
    geometry = dirichlet.geometry_service
    gen = rng.generator()
    certified = violations = 0
    rows = []
    for trial in range(trials):
        if gen.random() < 0.5:
            width, height = gen.uniform(0.5, 1.5, size=2)
            domain = geometry.rectangle(0.0, width, 0.0, height, h)
            kind = "rectangle"
        else:
            domain = geometry.disc(Point2(0.0, 0.0), float(gen.uniform(0.4, 0.9)), h)
            kind = "disc"
        eigen = dirichlet.lambda1_grid(domain)
        lambda1 = eigen.lambda1
        psi = dirichlet.solve_psi(domain, float(gen.uniform(0.1, 0.9)) * lambda1, lambda1=lambda1)
        lam = float(gen.uniform(0.1, 1.3)) * lambda1
        report = dirichlet.certificate_report(domain, psi, lam, eigen)
        if report.certified:
            certified += 1
            gap_negative = report.implied_gap is not None and report.implied_gap < -GREEN_GAP_RTOL * lambda1
            if lam > 1.02 * lambda1 or gap_negative:
                violations += 1
        rows.append((trial, kind, lam, lambda1, report.certified, report.min_ratio, report.green_residual,
                     report.implied_gap))
    return certified, violations, rows


def _reference(config: ScenarioConfig, shape: str) -> Optional[tuple[float, float]]:
    if shape not in REFERENCE_VALUES:
        return None
    value, tolerance = REFERENCE_VALUES[shape]
    configured = config.get_str("tolerance")
    return value, (float(configured) if configured else tolerance)


def run_eigen(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Grid and/or stochastic lambda1 of a named shape.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    dirichlet = DirichletService()
    shape = config.get_str("shape")
    h = config.get_float("h")
    method = config.get_str("method")
    if method not in ("grid", "stochastic", "both"):
        raise ValueError(f"unknown method '{method}'")
    domain = dirichlet.geometry_service.named_set(shape, h)
    reference = _reference(config, shape)
    repo.save_raster("domain", domain)

    grid_result = dirichlet.lambda1_grid(domain)
    monitor.record_metric("lambda1", grid_result.lambda1)
    repo.save_json("eigen_grid.json", grid_result.to_dict())
    if method in ("grid", "both") and reference is not None:
        value, tolerance = reference
        error = abs(grid_result.lambda1 - value) / value
        monitor.record_metric("lambda1_reference", value)
        monitor.record_metric("lambda1_relative_error", error)
        monitor.record_assertion("lambda1_grid", error <= tolerance, error, f"within {tolerance:.0%} of {value:.6f}")

    if method in ("stochastic", "both"):
        x0 = config.get_str("x0")
        start = Point2(*config.get_point("x0")) if x0 else Point2(*SHAPE_CENTRES.get(shape, (0.0, 0.0)))
        stochastic = dirichlet.lambda1_stochastic(
            RngSpec(config.seed), domain, [start], config.get_floats("t_grid"),
            config.get_int("n"), config.get_float("dt"),
        )
        repo.save_json("eigen_stochastic.json", stochastic.to_dict())
        gap = abs(stochastic.lambda1 - grid_result.lambda1) / grid_result.lambda1
        tolerance = config.get_float("stochastic_tolerance")
        monitor.record_metric("lambda1_stochastic", stochastic.lambda1)
        monitor.record_metric("lambda1_stochastic_relative_gap", gap)
        monitor.record_assertion("lambda1_stochastic", gap <= tolerance, gap, f"within {tolerance:.0%} of grid")

    pairs = config.get_int("monotone_pairs")
    if pairs > 0:
        violations = monotone_violations(dirichlet, RngSpec(config.seed, 1), pairs)
        monitor.record_metric("monotone_violations", violations)
        monitor.record_assertion("inclusion_monotone", violations == 0, violations, f"{pairs} nested pairs")

    phi_lambda = config.get_float("phi_lambda")
    if phi_lambda > 0:
        margin = config.get_float("phi_margin")
        residuals, rows = [], []
        for cell in (h, h / 2):
            fine = dirichlet.geometry_service.named_set(shape, cell)
            psi = dirichlet.solve_psi(fine, phi_lambda)
            _, diagnostics = dirichlet.phi_diagnostics(psi, phi_lambda, margin)
            residuals.append(diagnostics.residual)
            rows.append((cell, diagnostics.residual, diagnostics.min_laplacian_excess,
                         diagnostics.max_gradient_excess, diagnostics.tol))
            monitor.record_assertion(f"phi_inequalities_h_{cell!r}", diagnostics.inequalities_hold,
                                     diagnostics.min_laplacian_excess, "Delta phi >= lam - tol, |grad phi|^2 <= Delta phi + tol")
        repo.save_rows("phi_residuals.csv", ("h", "residual", "min_laplacian_excess", "max_gradient_excess", "tol"), rows)
        ratio = residuals[0] / residuals[1] if residuals[1] > 0 else float("inf")
        minimum = config.get_float("phi_ratio_min")
        monitor.record_metric("phi_residual_ratio", ratio)
        monitor.record_assertion("phi_residual_converges", ratio >= minimum, ratio, f"ratio under h-halving >= {minimum}")

    trials = config.get_int("certificate_trials")
    if trials > 0:
        certified, violations, rows = certificate_violations(dirichlet, RngSpec(config.seed, 2), trials)
        repo.save_rows("certificates.csv", ("trial", "shape", "lambda", "lambda1", "certified", "min_ratio",
                                            "green_residual", "implied_gap"), rows)
        monitor.record_metric("max_green_residual", max(row[6] for row in rows))
        monitor.record_metric("certificates_issued", certified)
        monitor.record_metric("certificate_violations", violations)
        monitor.record_assertion("certificate_sound", violations == 0, violations, f"{trials} random triples")


sc = Scenario(name="eigen", defaults=DEFAULTS, runner=run_eigen,
              description="First Dirichlet eigenvalue by grid solve and by survival decay")
