"""Raster Julia set of a polynomial with reference-shape, area and dilation checks"""
import logging

import numpy as np

from thinlab.models.geometry import RasterSet
from thinlab.models.polynomial import PolynomialMap, parse_polynomial
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.dirichlet_service import DirichletService
from thinlab.services.julia_service import JuliaService
from thinlab.services.monitoring_service import MonitoringService

DEFAULTS = {
    "map": "z^2",
    "resolution": "641",
    "bbox_scale": "1.05",
    "max_iter": "256",
    "reference": "auto",
    "max_deviation_cells": "2",
    "invariance_samples": "500",
    "area_ratio": "false",
    "area_ratio_max": "0.7",
    "eps_schedule": "",
}

REFERENCE_MAPS = {(0j, 0j, 1 + 0j): "circle", (-2 + 0j, 0j, 1 + 0j): "segment"}


def reference_deviation(raster: RasterSet, reference: str) -> float:
    """Largest distance, in cells, from an occupied centre to the unit circle or to [-2, 2]."""
    centres = raster.occupied_centers()
    if reference == "circle":
        distance = np.abs(np.hypot(centres[:, 0], centres[:, 1]) - 1.0)
    elif reference == "segment":
        distance = np.hypot(np.maximum(np.abs(centres[:, 0]) - 2.0, 0.0), centres[:, 1])
    else:
        raise ValueError(f"unknown reference '{reference}'")
    return float(np.max(distance)) / raster.h


def _reference_for(poly: PolynomialMap, configured: str) -> str:
    if configured != "auto":
        return configured
    key = tuple(complex(a) for a in poly.coefficients)
    return REFERENCE_MAPS.get(key, "none")


def run_julia_set(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Rasterize J(P) and check it.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    julia = JuliaService()
    poly = julia.make_map(list(parse_polynomial(config.get_str("map"))), config.get_int("max_iter"))
    half = config.get_float("bbox_scale") * poly.escape_radius
    bbox = (-half, half, -half, half)
    resolution = config.get_int("resolution")

    filled = julia.filled_julia(poly, bbox, resolution)
    raster = julia.geometry_service.boundary_of_unbounded_component(filled)
    repo.save_raster("filled_julia", filled)
    repo.save_raster("julia_set", raster)
    monitor.record_metric("h", raster.h)
    monitor.record_metric("cells", raster.count)
    monitor.record_metric("area", julia.geometry_service.area(raster))
    monitor.record_metric("escape_radius", poly.escape_radius)

    reference = _reference_for(poly, config.get_str("reference"))
    if reference != "none":
        deviation = reference_deviation(raster, reference)
        limit = config.get_float("max_deviation_cells")
        monitor.record_metric("reference_deviation_cells", deviation)
        monitor.record_assertion("reference_deviation", deviation <= limit, deviation,
                                 f"{reference} within {limit} cells")

    samples = config.get_int("invariance_samples")
    if samples > 0:
        defect = julia.forward_invariance_defect(poly, raster, samples, RngSpec(config.seed))
        monitor.record_metric("forward_invariance_defect", defect)
        monitor.record_assertion("forward_invariance", defect == 0.0, defect, "P(z) within 2h Lip(P) of the set")

    if config.get_bool("area_ratio"):
        ratio = julia.area_ratio(poly, bbox, resolution)
        limit = config.get_float("area_ratio_max")
        monitor.record_metric("area_ratio", ratio)
        monitor.record_assertion("area_shrinks", ratio < limit, ratio, f"area(h/2)/area(h) < {limit}")

    schedule = config.get_floats("eps_schedule")
    if schedule:
        sweep = DirichletService(julia.geometry_service).eigen_sweep(raster, schedule)
        repo.save_rows("eigen_sweep.csv", ("eps", "lambda1"), ((eps, r.lambda1) for eps, r in sweep))
        values = [r.lambda1 for _, r in sweep]
        increasing = all(b > a for a, b in zip(values, values[1:]))
        for eps, result in sweep:
            monitor.record_metric(f"lambda1_eps_{eps!r}", result.lambda1)
        monitor.record_assertion("lambda1_increases", increasing, None, "lambda1 increases as eps decreases")
    logging.info(f"run_julia_set: {config.get_str('map')} -> {raster.count} boundary cells")


sc = Scenario(name="julia-set", defaults=DEFAULTS, runner=run_julia_set,
              description="Raster Julia set J(P) with analytic reference checks")
