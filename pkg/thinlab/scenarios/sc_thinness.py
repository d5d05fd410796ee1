"""Quantitative thinness test of a named set along a dilation schedule"""
from dataclasses import asdict

from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.brownian_service import BrownianService
from thinlab.services.monitoring_service import MonitoringService

DEFAULTS = {
    "set": "segment",
    "h": "1/64",
    "t": "0.1",
    "delta": "0.1",
    "eps_schedule": "0.2,0.1,0.05",
    "n": "400",
    "dt": "1e-3",
    "expect": "pass",
}


def run_thinness(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Survival sup over start points against delta, per eps, and the Markov iterate.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    brownian = BrownianService()
    lambda_set = brownian.geometry_service.named_set(config.get_str("set"), config.get_float("h"))
    expect = config.get_str("expect")
    if expect not in ("pass", "fail"):
        raise ValueError(f"expect must be 'pass' or 'fail', got '{expect}'")
    report = brownian.thinness_test(
        RngSpec(config.seed), lambda_set, config.get_float("t"), config.get_float("delta"),
        config.get_floats("eps_schedule"), config.get_int("n"), config.get_float("dt"),
    )
    repo.save_raster("set", lambda_set)
    repo.save_rows("thinness.csv", ("eps", "t", "x0x", "x0y", "n", "p_hat", "ci", "flag"),
                   (tuple(asdict(row).values()) for row in report.rows))
    repo.save_rows(
        "thinness_levels.csv", ("eps", "sup_p_hat", "sup_ci", "worst_x", "worst_y", "passed"),
        ((lv.eps, lv.sup_p_hat, lv.sup_ci, lv.worst_start[0], lv.worst_start[1], lv.passed) for lv in report.levels),
    )
    for level in report.levels:
        monitor.record_metric(f"sup_p_hat_eps_{level.eps!r}", level.sup_p_hat)
    if report.pass_eps is not None:
        monitor.record_metric("pass_eps", report.pass_eps)
    if report.moment_bound is not None:
        monitor.record_metric("moment_bound", report.moment_bound)

    if expect == "pass":
        monitor.record_assertion("thin", report.passed, report.pass_eps, "some eps reaches sup P <= delta")
    else:
        passing = sum(level.passed for level in report.levels)
        monitor.record_assertion("not_thin", passing == 0, passing, "no eps reaches sup P <= delta")
    monitor.record_assertion("markov_iterate", report.markov_holds, None, "P(T > kt) <= delta_hat^k + 3 sigma, k = 2, 3")


sc = Scenario(name="thinness", defaults=DEFAULTS, runner=run_thinness,
              description="Sup-over-starts survival test of a set's shrinking neighbourhoods")
