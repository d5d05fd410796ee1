"""Build f_n on shrinking neighbourhoods of a thin set and certify the result"""
import logging

import numpy as np

from thinlab.models.run import Scenario, ScenarioConfig
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.services.dirichlet_service import DirichletService, grid_laplacian
from thinlab.services.monitoring_service import MonitoringService

DEFAULTS = {
    "set": "segment",
    "h": "1/128",
    "n_values": "2,3,4",
    "eps_search": "0.2,0.1,0.05,0.025",
    "headroom": "auto",
    "control_set": "filled-square",
    "control_n": "4",
}


def run_fn_build(config: ScenarioConfig, monitor: MonitoringService, repo: ArtifactRepository) -> None:
    """f_n for each n, checked on the set for Delta f_n >= n and a decreasing max |f_n|, plus a set that must fail.

    Args:
        config: Scenario configuration
        monitor: Run monitor
        repo: Artifact repository
    """
    dirichlet = DirichletService()
    geometry = dirichlet.geometry_service
    h = config.get_float("h")
    lambda_set = geometry.named_set(config.get_str("set"), h)
    eps_search = config.get_floats("eps_search")
    headroom_setting = config.get_str("headroom")
    rows, maxima = [], []
    for n in (int(v) for v in config.get_floats("n_values")):
        headroom = 2.0 * n * n if headroom_setting == "auto" else float(headroom_setting)
        f, eps = dirichlet.build_fn(lambda_set, n, eps_search, headroom)
        on_set = geometry.embed(lambda_set, f.domain).occupancy[f.domain.occupancy]
        laplacian = grid_laplacian(f, 0.0)
        min_laplacian = float(np.min(laplacian[on_set]))
        max_abs = float(np.max(np.abs(f.values[on_set])))
        certificate = dirichlet.certify_from_fn(f, n / 2.0)
        maxima.append(max_abs)
        rows.append((n, eps, min_laplacian, max_abs, certificate.certified, certificate.min_ratio))
        repo.save_field(f"f_{n}", f)
        monitor.record_metric(f"eps_{n}", eps)
        monitor.record_metric(f"min_laplacian_f_{n}", min_laplacian)
        monitor.record_metric(f"max_abs_f_{n}", max_abs)
        monitor.record_assertion(f"laplacian_f_{n}", min_laplacian >= n, min_laplacian, f"min over the set >= {n}")
        monitor.record_assertion(f"certificate_f_{n}", certificate.certified, certificate.min_ratio,
                                 f"exp(-f_{n}) certifies lambda1 >= {n / 2}")
    repo.save_rows("fn_build.csv", ("n", "eps", "min_laplacian", "max_abs", "certified", "min_ratio"), rows)
    decreasing = all(b < a for a, b in zip(maxima, maxima[1:]))
    monitor.record_assertion("max_abs_decreasing", decreasing, None, "max of |f_n| over the set strictly decreasing in n")

    control = config.get_str("control_set")
    if control:
        control_n = config.get_int("control_n")
        control_set = geometry.named_set(control, h)
        try:
            dirichlet.build_fn(control_set, control_n, eps_search, 2.0 * control_n ** 2)
            rejected = False
        except ValueError as e:
            logging.info(f"run_fn_build: control set {control} rejected at n={control_n}: {e}")
            rejected = True
        monitor.record_assertion("control_rejected", rejected, None, f"{control} is not thin at n={control_n}")


sc = Scenario(name="fn-build", defaults=DEFAULTS, runner=run_fn_build,
              description="f_n construction with Laplacian and decrease checks")
