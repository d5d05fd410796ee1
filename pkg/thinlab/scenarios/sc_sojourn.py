"""Sojourn statistics: survival probabilities, decay rate and the exponential moment"""
import math

from thinlab.models.geometry import Point2
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.brownian_service import BrownianService
from thinlab.services.dirichlet_service import DirichletService
from thinlab.services.monitoring_service import MonitoringService

DEFAULTS = {
    "shape": "unit-disc",
    "h": "1/128",
    "x0": "0,0",
    "t": "0.3",
    "n": "20000",
    "dt": "1e-4",
    "decay_tolerance": "0.1",
    "lam_fraction": "0.5",
    "t_cap": "5",
    "path_T": "1",
}


def run_sojourn(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Survival at t and 2t, the decay rate between them, and E[exp(lam T)] below lambda1.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    brownian = BrownianService()
    dirichlet = DirichletService(brownian.geometry_service, brownian)
    domain = brownian.geometry_service.named_set(config.get_str("shape"), config.get_float("h"))
    x0 = Point2(*config.get_point("x0"))
    t, n, dt = config.get_float("t"), config.get_int("n"), config.get_float("dt")
    lambda1 = dirichlet.lambda1_grid(domain).lambda1
    monitor.record_metric("lambda1_grid", lambda1)

    rows = []
    estimates = {}
    for threshold in (t, 2 * t):
        stats = brownian.survival_probability(RngSpec(config.seed), x0, domain, threshold, n, dt)
        estimates[threshold] = stats
        rows.append((threshold, stats.n, stats.survive, stats.p_hat, stats.ci_half_width, stats.mean_sojourn))
    repo.save_rows("survival.csv", ("t", "n", "survive", "p_hat", "ci", "mean_sojourn"), rows)
    first, second = estimates[t], estimates[2 * t]
    monitor.record_metric("p_hat", first.p_hat)
    monitor.record_metric("p_hat_ci", first.ci_half_width)
    monitor.record_metric("p_hat_2t", second.p_hat)
    if first.survive > 0 and second.survive > 0:
        rate = -math.log(second.p_hat / first.p_hat) / t
        gap = abs(rate - lambda1) / lambda1
        tolerance = config.get_float("decay_tolerance")
        monitor.record_metric("decay_rate", rate)
        monitor.record_assertion("decay_rate", gap <= tolerance, gap, f"within {tolerance:.0%} of lambda1")
    else:
        monitor.record_assertion("decay_rate", False, None, "no survivors at 2t")

    lam = config.get_float("lam_fraction") * lambda1
    moment = brownian.exp_moment(RngSpec(config.seed, 1), x0, domain, lam, n, dt, config.get_float("t_cap"))
    monitor.record_metric("exp_moment", moment.exp_moment_hat)
    monitor.record_metric("exp_moment_ci", moment.exp_moment_ci)
    monitor.record_metric("exp_moment_truncated", moment.truncated)
    if moment.flag:
        monitor.flag("exp_moment", moment.flag)
    monitor.record_assertion("exp_moment_finite", not moment.divergence_suspect, moment.exp_moment_hat,
                             f"lam = {config.get_float('lam_fraction')} lambda1 is not divergence-suspect")

    path = brownian.sample_path(RngSpec(config.seed, 2), x0, config.get_float("path_T"), dt)
    repo.save_path("sample_path", path)
    monitor.record_metric("sample_path_sojourn", brownian.sojourn_time(path, domain))


sc = Scenario(name="sojourn", defaults=DEFAULTS, runner=run_sojourn,
              description="Monte Carlo survival, decay rate and exponential moment of the sojourn time")
