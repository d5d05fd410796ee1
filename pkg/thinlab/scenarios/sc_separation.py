"""Separation stress test of sub-1/2 tube perturbations of the reference path"""
from thinlab.models.geometry import RasterSet
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.monitoring_service import MonitoringService
from thinlab.services.renormalization_service import RenormalizationService

DEFAULTS = {
    "n_perturb": "10000",
    "radius": "0.45",
    "resolution": "256",
    "samples_per_segment": "32",
    "broken_control": "true",
    "neighbourhood_h": "1/64",
}


def run_separation(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Perturbations with sup-norm below radius must all separate 0 from infinity.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    renorm = RenormalizationService()
    geometry = renorm.geometry_service
    resolution = config.get_int("resolution")
    report = renorm.separation_stress(
        RngSpec(config.seed), config.get_int("n_perturb"), config.get_float("radius"),
        resolution, config.get_int("samples_per_segment"),
    )
    monitor.record_metric("counterexamples", report.counterexample_count)
    monitor.record_metric("rejected", report.rejected)
    monitor.record_metric("max_sup_distance", report.max_sup_distance)
    for i, path in enumerate(report.counterexamples):
        repo.save_path(f"counterexample_{i}", path)
    monitor.record_assertion("all_separate", report.counterexample_count == 0, report.counterexample_count,
                             f"{report.n_perturb} perturbations below {report.radius}")

    if config.get_bool("broken_control"):
        control = renorm.broken_control(resolution)
        monitor.record_assertion("control_detected", control.counterexample_count == 1,
                                 control.counterexample_count, "a non-separating path is reported")

    # reference path and its 1/2-neighbourhood, for rendering
    reference = geometry.gamma0(config.get_int("samples_per_segment"))
    repo.save_path("gamma0", reference)
    h = config.get_float("neighbourhood_h")
    lo, hi = reference.points.min(axis=0), reference.points.max(axis=0)
    grid = RasterSet.node_aligned(lo[0], hi[0], lo[1], hi[1], h, margin_cells=2)
    trace = grid.with_occupancy(geometry.rasterize_polyline(reference.points, grid))
    neighbourhood = geometry.dilate(trace, 0.5)
    repo.save_raster("gamma0_neighbourhood", neighbourhood)
    monitor.record_metric("neighbourhood_area", geometry.area(neighbourhood))


sc = Scenario(name="separation", defaults=DEFAULTS, runner=run_separation,
              description="Every path within 1/2 of the reference path separates the origin")
