"""Tube probability p0 by co-moving PDE, with self-convergence, wide-tube and Monte Carlo checks"""
import math

from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.monitoring_service import MonitoringService
from thinlab.services.renormalization_service import RenormalizationService

DEFAULTS = {
    "radius": "1/3",
    "h": "",
    "dt": "1e-3",
    "scheme": "implicit",
    "halving": "true",
    "log_tolerance": "0.1",
    "wide_radius": "10",
    "wide_tolerance": "0.05",
    "mc_radius": "2",
    "mc_n": "1000000",
    "mc_dt": "1e-3",
}


def run_p0(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """log10 p0 at the configured radius and its validations.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    renorm = RenormalizationService()
    radius = config.get_float("radius")
    h = config.get_float("h") if config.get_str("h") else radius / 64.0
    dt = config.get_float("dt")
    scheme = config.get_str("scheme")
    rows = []

    log10_p0 = renorm.estimate_p0_pde(h, dt, radius=radius, scheme=scheme)
    rows.append(("main", radius, h, dt, log10_p0))
    monitor.record_metric("log10_p0", log10_p0)
    monitor.record_assertion("p0_positive", math.isfinite(log10_p0), log10_p0, "p0 > 0 with finite log10")

    if config.get_bool("halving"):
        finer = renorm.estimate_p0_pde(h / 2.0, dt, radius=radius, scheme=scheme)
        rows.append(("halved", radius, h / 2.0, dt, finer))
        drift = abs(log10_p0 - finer) / abs(finer) if finer != 0 else abs(log10_p0)
        tolerance = config.get_float("log_tolerance")
        monitor.record_metric("log10_p0_halved", finer)
        monitor.record_metric("log10_p0_relative_change", drift)
        monitor.record_assertion("p0_self_convergence", drift <= tolerance, drift,
                                 f"log10 p0 within {tolerance:.0%} under h-halving")

    wide = config.get_float("wide_radius")
    if wide > 0:
        pde = 10.0 ** renorm.estimate_p0_pde(wide / 64.0, dt, radius=wide, scheme=scheme)
        gaussian = renorm.free_tube_probability(wide)
        error = abs(pde - gaussian) / gaussian
        tolerance = config.get_float("wide_tolerance")
        rows.append(("wide", wide, wide / 64.0, dt, math.log10(pde)))
        monitor.record_metric("p0_wide", pde)
        monitor.record_metric("p0_wide_gaussian", gaussian)
        monitor.record_assertion("wide_tube_limit", error <= tolerance, error,
                                 f"within {tolerance:.0%} of the free Gaussian")

    mc_radius = config.get_float("mc_radius")
    if mc_radius > 0:
        pde = 10.0 ** renorm.estimate_p0_pde(mc_radius / 64.0, dt, radius=mc_radius, scheme=scheme)
        stats = renorm.tube_probability_mc(RngSpec(config.seed), mc_radius, config.get_int("mc_n"),
                                           config.get_float("mc_dt"))
        standard_error = math.sqrt(stats.p_hat * (1 - stats.p_hat) / stats.n)
        allowance = 3.0 * standard_error
        gap = abs(pde - stats.p_hat)
        rows.append(("mc", mc_radius, mc_radius / 64.0, dt, math.log10(pde)))
        repo.save_rows("p0_mc.csv", ("radius", "n", "survive", "p_hat", "ci", "pde"),
                       [(mc_radius, stats.n, stats.survive, stats.p_hat, stats.ci_half_width, pde)])
        monitor.record_metric("p0_mc_pde", pde)
        monitor.record_metric("p0_mc_hat", stats.p_hat)
        monitor.record_metric("p0_mc_standard_error", standard_error)
        monitor.record_assertion("pde_matches_mc", gap <= allowance, gap,
                                 "within 3 Monte Carlo standard errors")
    repo.save_rows("p0.csv", ("case", "radius", "h", "dt", "log10_p0"), rows)


sc = Scenario(name="p0", defaults=DEFAULTS, runner=run_p0,
              description="Probability that the path stays in the tube around the reference path")
