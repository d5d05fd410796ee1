"""Two-sample check that the bridge construction of the renormalized segment matches its explicit law"""
from thinlab.models.geometry import Point2
from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.models.sampling import RngSpec
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.monitoring_service import MonitoringService
from thinlab.services.renormalization_service import LAW_CHECK_LEVEL, RenormalizationService

DEFAULTS = {
    "b": "0.5,-0.3",
    "T": "1",
    "Tp": "1/8",
    "n": "100000",
    "n_grid": "64",
    "free_check": "true",
    "free_T": "1000",
    "free_Tp": "1",
}


def run_law_check(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """Bridge-vs-explicit p-values, and explicit-vs-free when the drift term is negligible.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    renorm = RenormalizationService()
    b = Point2(*config.get_point("b"))
    n, n_grid = config.get_int("n"), config.get_int("n_grid")
    report = renorm.conditioned_law_check(RngSpec(config.seed), b, config.get_float("T"), config.get_float("Tp"),
                                          n, n_grid)
    rows = [("bridge_vs_explicit", name, p, report.threshold) for name, p in sorted(report.p_values.items())]
    monitor.record_metric("min_p_value", report.min_p_value)
    monitor.record_assertion("bridge_matches_explicit", report.passed, report.min_p_value,
                             f"every p > {report.threshold:.5f}")

    if config.get_bool("free_check"):
        rng = RngSpec(config.seed, 1)
        T, Tp = config.get_float("free_T"), config.get_float("free_Tp")
        origin = Point2(0.0, 0.0)
        explicit = renorm.segment_statistics(rng, origin, T, Tp, n, "explicit", key=0, n_grid=n_grid)
        free = renorm.segment_statistics(rng, origin, T, Tp, n, "free", key=1, n_grid=n_grid)
        p_values = renorm.compare_segment_laws(explicit, free)
        threshold = LAW_CHECK_LEVEL / len(p_values)
        rows.extend(("explicit_vs_free", name, p, threshold) for name, p in sorted(p_values.items()))
        minimum = min(p_values.values())
        monitor.record_metric("min_p_value_free", minimum)
        monitor.record_assertion("explicit_matches_free", minimum > threshold, minimum,
                                 f"T={T}, Tp={Tp}: every p > {threshold:.5f}")
    repo.save_rows("law_check.csv", ("comparison", "statistic", "p_value", "threshold"), rows)


sc = Scenario(name="law-check", defaults=DEFAULTS, runner=run_law_check,
              description="Conditioned renormalized segment: bridge construction against the explicit formula")
