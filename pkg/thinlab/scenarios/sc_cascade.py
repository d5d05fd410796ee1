"""Replicated renormalized-path cascades with halving, tube-frequency and exit-from-K checks"""
import math

from thinlab.models.geometry import Point2, RasterSet
from thinlab.models.polynomial import parse_polynomial
from thinlab.models.renorm import ExitStatus, RenormConfig
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.julia_service import JuliaService
from thinlab.services.monitoring_service import MonitoringService
from thinlab.services.renormalization_service import RenormalizationService

DEFAULTS = {
    "delta": "16",
    "n_levels": "4",
    "replicas": "1000",
    "tube_radius_close": "10",
    "tube_radius_p0": "2",
    "p0": "",
    "pde_dt": "1e-3",
    "dt_rel": "1/256",
    "K_map": "z^2",
    "K_resolution": "1281",
    "x0": "1,0",
    "resolution_factor": "4",
    "forced_check": "true",
    "forced_delta": "16",
    "forced_p0": "0.5",
}


def julia_k(config: ScenarioConfig, julia: JuliaService) -> RasterSet:
    """K = raster Julia set of K_map on a box 1.05 times its escape radius."""
    poly = julia.make_map(list(parse_polynomial(config.get_str("K_map"))))
    half = 1.05 * poly.escape_radius
    return julia.julia_set(poly, (-half, half, -half, half), config.get_int("K_resolution"))


def run_cascade(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Cascade replicas against the PDE tube-probability oracle, plus one forced-success cascade.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    julia = JuliaService()
    renorm = RenormalizationService(julia.geometry_service)
    K = julia_k(config, julia)
    repo.save_raster("K", K)
    x0 = Point2(*config.get_point("x0"))
    close = config.get_float("tube_radius_close")
    p0_setting = config.get_str("p0")
    cfg = RenormConfig(
        delta=config.get_float("delta"),
        n_levels=config.get_int("n_levels"),
        K=K,
        x0=x0,
        tube_radius_close=close,
        tube_radius_p0=config.get_float("tube_radius_p0"),
        dt_rel=config.get_float("dt_rel"),
        p0=float(p0_setting) if p0_setting else None,
        resolution_factor=config.get_float("resolution_factor"),
    )
    replicas = config.get_int("replicas")
    summary = renorm.run_cascades(RngSpec(config.seed), cfg, replicas)
    oracle = 10.0 ** renorm.estimate_p0_pde(close / 64.0, config.get_float("pde_dt"), radius=close)

    repo.save_rows(
        "cascade.csv", ("replica", "level", "T_n", "sup_distance", "a_n", "exit_check"),
        (
            (r, level, trace.times[level], trace.sup_distances[level - 1], trace.a_outcomes[level - 1],
             trace.exit_checks[level - 1].value)
            for r, trace in enumerate(summary.traces)
            for level in range(1, cfg.n_levels + 1)
        ),
    )
    repo.save_json("cascade_summary.json", {
        "replicas": summary.replicas,
        "a1_frequency": summary.a1_frequency,
        "b_frequencies": list(summary.b_frequencies),
        "exit_counts": summary.exit_counts,
        "halving_violations": summary.halving_violations,
        "tube_probability_oracle": oracle,
    })
    monitor.record_metric("tube_probability_oracle", oracle)
    monitor.record_metric("a1_frequency", summary.a1_frequency)
    for status, count in summary.exit_counts.items():
        monitor.record_metric(f"exit_{status}", count)

    monitor.record_assertion("halving", summary.halving_violations == 0, summary.halving_violations,
                             "T_(n+1) < T_n / 2 on every trace")
    sigma = math.sqrt(oracle * (1 - oracle) / replicas)
    monitor.record_assertion("a1_frequency", summary.a1_frequency >= oracle - 3 * sigma, summary.a1_frequency,
                             f"A_1 frequency >= {oracle:.6f} - 3 sigma")
    for n, frequency in enumerate(summary.b_frequencies, start=1):
        bound = (1 - oracle / 2) ** n
        sigma_n = math.sqrt(frequency * (1 - frequency) / replicas)
        monitor.record_metric(f"b_frequency_{n}", frequency)
        monitor.record_assertion(f"b_bound_{n}", frequency - 3 * sigma_n <= bound, frequency,
                                 f"B_{n} frequency - 3 sigma <= (1 - p0/2)^{n} = {bound:.6g}")
    contained = summary.exit_counts[ExitStatus.CONTAINED.value]
    resolved = summary.exit_counts[ExitStatus.EXITED.value] + contained
    monitor.record_assertion("exit_checks_resolved", resolved > 0, resolved,
                             "at least one A_n window is resolved by the K raster")
    monitor.record_assertion("exit_from_K", contained == 0, contained, "every resolved A_n exits K")

    if config.get_bool("forced_check"):
        forced = RenormConfig(
            delta=config.get_float("forced_delta"),
            n_levels=cfg.n_levels,
            K=K,
            x0=x0,
            dt_rel=cfg.dt_rel,
            p0=config.get_float("forced_p0"),
            forced_success=True,
            resolution_factor=cfg.resolution_factor,
        )
        trace = renorm.run_cascade(RngSpec(config.seed, 1), forced)
        repo.save_json("forced_trace.json", trace.to_dict())
        resolved = [status for status in trace.exit_checks if status != ExitStatus.UNRESOLVED]
        monitor.record_assertion("forced_a_n", all(trace.a_outcomes), None, "A_n holds on every forced level")
        monitor.record_assertion(
            "forced_exit", bool(resolved) and all(status == ExitStatus.EXITED for status in resolved),
            len(resolved), "every resolved forced level leaves K",
        )


sc = Scenario(name="cascade", defaults=DEFAULTS, runner=run_cascade,
              description="T_n / A_n / B_n cascade of renormalized windows and the exit-from-K check")
