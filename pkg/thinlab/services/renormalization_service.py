"""Service for the renormalized-path cascade: tube probabilities, the T' rule, bridges and exit checks."""
import logging
import math
from typing import Optional

import numpy as np
from numpy.random import Generator
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from thinlab.errors import BridgeConsistencyError, PdeInstabilityError
from thinlab.models.geometry import PathSample, Point2, RasterSet
from thinlab.models.renorm import (
    CascadeSummary,
    ExitStatus,
    LawCheckReport,
    RenormConfig,
    RenormTrace,
    SeparationReport,
)
from thinlab.models.sampling import RngSpec, SojournStats
from thinlab.services.brownian_service import BrownianService
from thinlab.services.dirichlet_service import DirichletService, neighbour_grids
from thinlab.services.geometry_service import PlaneGeometryService
from thinlab.utils import parallel_map

PIN_TOLERANCE = 1e-9
LAW_CHECK_LEVEL = 0.01


class RenormalizationService:
    """Tube events around the reference path and the time-halving cascade built on them."""

    def __init__(self, geometry_service: Optional[PlaneGeometryService] = None,
                 brownian_service: Optional[BrownianService] = None,
                 dirichlet_service: Optional[DirichletService] = None) -> None:
        self.geometry_service = geometry_service or PlaneGeometryService()
        self.brownian_service = brownian_service or BrownianService(self.geometry_service)
        self.dirichlet_service = dirichlet_service or DirichletService(self.geometry_service, self.brownian_service)

    # ---- tube probability ----------------------------------------------

    def free_tube_probability(self, radius: float) -> float:
        """P(|gamma(1) - gamma0(1)| < radius) for the free path started at 0."""
        offset = self.geometry_service.gamma0_at(1.0)
        return float(stats.ncx2.cdf(radius ** 2 / 2.0, df=2, nc=float(offset @ offset) / 2.0))

    # noinspection PyMethodMayBeStatic
    def _advection(self, domain: RasterSet, velocity: np.ndarray) -> sparse.csr_matrix:
        """Discretization of velocity . grad on the occupied cells, zero exterior.

        Central differences along an axis where |v| h <= 2, first-order upwind otherwise;
        either way -Laplacian - advection stays an M-matrix.
        """
        occ = domain.occupancy
        n = domain.count
        index = np.full(occ.shape, -1, dtype=np.int64)
        index[occ] = np.arange(n)
        shifted = neighbour_grids(index, -1)
        rows, cols, vals = [], [], []
        centre = np.arange(n)
        for axis, speed in ((1, float(velocity[0])), (0, float(velocity[1]))):
            if speed == 0.0:
                continue
            ahead = (0, 1) if axis == 1 else (1, 0)
            behind = (0, -1) if axis == 1 else (-1, 0)
            if abs(speed) * domain.h <= 2.0:
                coeff = speed / (2.0 * domain.h)
                for key, sign in ((ahead, 1.0), (behind, -1.0)):
                    nb = shifted[key][occ]
                    has = nb >= 0
                    rows.append(centre[has])
                    cols.append(nb[has])
                    vals.append(np.full(int(has.sum()), sign * coeff))
                continue
            nb = shifted[ahead if speed > 0 else behind][occ]
            has = nb >= 0
            coeff = abs(speed) / domain.h
            rows += [centre, centre[has]]
            cols += [centre, nb[has]]
            vals += [np.full(n, -coeff), np.full(int(has.sum()), coeff)]
        if not rows:
            return sparse.csr_matrix((n, n))
        return sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()

    def estimate_p0_pde(self, grid_h: float, dt: float, radius: float = 1.0 / 3.0,
                        scheme: str = "implicit") -> float:
        """log10 P(sup_{[1,2]} |gamma - gamma0| < radius), by absorbing drift-diffusion in the co-moving frame.

        The density of gamma(1) - gamma0(1) is the free heat kernel at time 1 shifted by
        -gamma0(1), restricted to the disc. On each affine segment of gamma0 the density
        solves u_t = Delta u + v . grad u with v the segment velocity and zero exterior.
        Mass is renormalized every step and accumulated in log space.

        Args:
            grid_h: Cell size, at most radius/64
            dt: Time step (must satisfy the CFL bound for the explicit scheme)
            radius: Tube radius
            scheme: "implicit" (backward Euler) or "explicit" (forward Euler)

        Returns:
            float: log10 of the tube probability
        """
        if grid_h > radius / 64.0 * (1 + 1e-9):
            raise ValueError(f"grid_h={grid_h} must be at most radius/64={radius / 64.0}")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if scheme not in ("implicit", "explicit"):
            raise ValueError(f"unknown scheme '{scheme}'")
        disc = self.geometry_service.disc(Point2(0.0, 0.0), radius, grid_h, margin_cells=1)
        centres = disc.occupied_centers()
        shift = self.geometry_service.gamma0_at(1.0)
        q = np.exp(-np.sum((centres + shift) ** 2, axis=1) / 4.0) / (4.0 * math.pi)
        total = float(q.sum())
        log_mass = math.log(total * grid_h ** 2)
        q = q / total
        laplacian, _ = self.dirichlet_service.laplacian(disc)
        identity = sparse.identity(disc.count, format="csr")

        for t0, t1, velocity in self.geometry_service.gamma0_velocities():
            steps = max(1, math.ceil((t1 - t0) / dt - 1e-9))
            tau = (t1 - t0) / steps
            generator = (-laplacian + self._advection(disc, velocity)).tocsr()
            if scheme == "explicit":
                bound = 1.0 / float(np.max(-generator.diagonal()))
                if tau > bound:
                    raise ValueError(f"dt={tau} violates the explicit stability bound {bound}")
                propagate = (identity + tau * generator).tocsr()
                advance = propagate.dot
            else:
                advance = splu((identity - tau * generator).tocsc()).solve
            for _ in range(steps):
                q = advance(q)
                mass = float(q.sum())
                if mass > 1.0 + 1e-9 or float(q.min()) < -1e-12 * float(q.max()):
                    raise PdeInstabilityError(f"surviving mass grew to {mass} (scheme={scheme}, dt={tau})")
                log_mass += math.log(mass)
                q = q / mass
            logging.debug(f"RenormalizationService.estimate_p0_pde: t={t1} log10 mass={log_mass / math.log(10):.4f}")
        log10_p0 = log_mass / math.log(10.0)
        logging.info(f"RenormalizationService.estimate_p0_pde: radius={radius} h={grid_h} log10 p0={log10_p0:.4f}")
        return log10_p0

    def tube_probability_mc(self, rng: RngSpec, radius: float, n: int, dt: float) -> SojournStats:
        """Naive Monte Carlo of the tube event, monitored at the time steps of [1, 2]."""
        steps = max(1, math.ceil(1.0 / dt - 1e-9))
        times = 1.0 + np.arange(1, steps + 1) / steps
        targets = self.geometry_service.gamma0_at(times)
        start = self.geometry_service.gamma0_at(1.0)
        sigma = math.sqrt(2.0 / steps)
        batch_size = self.brownian_service.batch_size
        n_batches = max(1, math.ceil(n / batch_size))

        def run(b: int) -> int:
            gen = rng.generator(b)
            m = min(batch_size, n - b * batch_size)
            pos = gen.normal(0.0, math.sqrt(2.0), size=(m, 2))
            pos = pos[np.hypot(*(pos - start).T) < radius]
            for target in targets:
                if len(pos) == 0:
                    break
                pos += sigma * gen.standard_normal(pos.shape)
                pos = pos[np.hypot(*(pos - target).T) < radius]
            return len(pos)

        survive = sum(parallel_map(run, range(n_batches)))
        return SojournStats.from_counts(n, 1.0, survive)

    # ---- the T' rule and renormalized segments -------------------------

    # noinspection PyMethodMayBeStatic
    def choose_Tprime(self, b: Point2, T: float, p0: float) -> float:
        """T' = min(T/2, (1/(12 C))^2) * (1 - 1e-9) with C = (|b| + q sqrt(2T)) / T.

        q is the Rayleigh quantile with upper tail p0/2, so |B_T| < q sqrt(2T) with
        probability 1 - p0/2 and then |b - B_T| < C T.
        """
        if T <= 0:
            raise ValueError("T must be positive")
        if not 0 < p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")
        q = float(stats.rayleigh.isf(p0 / 2.0))
        c = (b.norm() + q * math.sqrt(2.0 * T)) / T
        return min(T / 2.0, (1.0 / (12.0 * c)) ** 2) * (1.0 - 1e-9)

    # noinspection PyMethodMayBeStatic
    def renormalized_segment(self, path: PathSample, Tp: float) -> PathSample:
        """t -> gamma(Tp t) / sqrt(Tp) for t in [1, 2]."""
        if Tp <= 0:
            raise ValueError("Tp must be positive")
        if path.t_start > Tp or path.t_end < 2.0 * Tp * (1 - 1e-12):
            raise ValueError(f"path on [{path.t_start}, {path.t_end}] does not cover [{Tp}, {2 * Tp}]")
        end = min(2.0 * Tp, path.t_end)
        inner = path.times[(path.times > Tp) & (path.times < end)]
        times = np.concatenate([[Tp], inner, [end]])
        values = path.value_at(times)
        relabelled = times / Tp
        relabelled[0], relabelled[-1] = 1.0, 2.0
        return PathSample(relabelled, values / math.sqrt(Tp))

    # ---- conditioned law -------------------------------------------------

    def sample_conditioned_segments(self, rng: RngSpec, b: Point2, T: float, Tp: float, n: int,
                                    method: str, n_grid: int = 64) -> np.ndarray:
        """Renormalized segments on the grid 1 + k/n_grid, shape (n, n_grid + 1, 2).

        method "bridge": sample_bridge from 0 to b over [0, T] with step Tp/n_grid, one
        sub-stream of rng per path, then renormalized_segment. T must be a multiple of Tp/n_grid.
        method "explicit": W_u + (sqrt(Tp) u / T)(b - B_T) with W on the unit scale and
        B_T = sqrt(Tp) W_2 + an independent increment over [2 Tp, T].
        method "free": a free path on the unit scale.
        """
        u = np.linspace(1.0, 2.0, n_grid + 1)
        target = b.as_array()
        origin = np.zeros((n, 2))
        if method == "bridge":
            dt = Tp / n_grid
            segments = np.empty((n, n_grid + 1, 2))
            for i in range(n):
                path = self.brownian_service.sample_bridge(rng.spawn(i), Point2(0.0, 0.0), b, T, dt)
                segments[i] = self.renormalized_segment(path, Tp).value_at(u)
            return segments
        gen = rng.generator()
        if method == "explicit":
            w = self.brownian_service.free_values(gen, u, origin)
            b_t = math.sqrt(Tp) * w[:, -1, :] + math.sqrt(2.0 * (T - 2.0 * Tp)) * gen.standard_normal((n, 2))
            return w + (math.sqrt(Tp) * u / T)[None, :, None] * (target - b_t)[:, None, :]
        if method == "free":
            return self.brownian_service.free_values(gen, u, origin)
        raise ValueError(f"unknown method '{method}'")

    # noinspection PyMethodMayBeStatic
    def compare_segment_laws(self, first: tuple[np.ndarray, np.ndarray],
                             second: tuple[np.ndarray, np.ndarray]) -> dict[str, float]:
        """Two-sample p-values for (midpoint values, sup norms) of two segment samples."""
        mid_a, sup_a = first
        mid_b, sup_b = second
        p_values = {}
        for axis, name in ((0, "x"), (1, "y")):
            p_values[f"mean_{name}"] = float(stats.ttest_ind(mid_a[:, axis], mid_b[:, axis]).pvalue)
            p_values[f"var_{name}"] = float(stats.levene(mid_a[:, axis], mid_b[:, axis]).pvalue)
            p_values[f"ks_{name}"] = float(stats.ks_2samp(mid_a[:, axis], mid_b[:, axis]).pvalue)
        p_values["sup_mean"] = float(stats.ttest_ind(sup_a, sup_b).pvalue)
        p_values["sup_ks"] = float(stats.ks_2samp(sup_a, sup_b).pvalue)
        return p_values

    def segment_statistics(self, rng: RngSpec, b: Point2, T: float, Tp: float, n: int, method: str,
                           key: int, n_grid: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint values (t = 1.5) and sup norms of n renormalized segments, in batches."""
        if n_grid % 2:
            raise ValueError("n_grid must be even")
        batch_size = self.brownian_service.batch_size
        n_batches = max(1, math.ceil(n / batch_size))

        def run(batch: int) -> tuple[np.ndarray, np.ndarray]:
            m = min(batch_size, n - batch * batch_size)
            seg = self.sample_conditioned_segments(rng.spawn(key, batch), b, T, Tp, m, method, n_grid)
            return seg[:, n_grid // 2, :], np.max(np.hypot(seg[..., 0], seg[..., 1]), axis=1)

        parts = parallel_map(run, range(n_batches))
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def conditioned_law_check(self, rng: RngSpec, b: Point2, T: float, Tp: float, n: int,
                              n_grid: int = 64) -> LawCheckReport:
        """Compare the bridge construction of the renormalized segment with the explicit representation.

        Args:
            rng: Random stream
            b: Pinned value at time T
            T: Pin time
            Tp: Window scale, below T/2
            n: Samples per construction
            n_grid: Grid intervals on [1, 2] (even)

        Returns:
            LawCheckReport: p-values judged at 0.01 / number of tests
        """
        if not 0 < Tp < T / 2:
            raise ValueError("need 0 < Tp < T/2")
        steps = T * n_grid / Tp
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"T={T} is not a multiple of the bridge step Tp/n_grid={Tp / n_grid}")
        bridge = self.segment_statistics(rng, b, T, Tp, n, "bridge", key=0, n_grid=n_grid)
        explicit = self.segment_statistics(rng, b, T, Tp, n, "explicit", key=1, n_grid=n_grid)
        p_values = self.compare_segment_laws(bridge, explicit)
        report = LawCheckReport(n=n, p_values=p_values, threshold=LAW_CHECK_LEVEL / len(p_values))
        logging.info(f"RenormalizationService.conditioned_law_check: min p={report.min_p_value:.4f} "
                     f"threshold={report.threshold:.5f} passed={report.passed}")
        return report

    # ---- cascade --------------------------------------------------------

    def resolve_p0(self, cfg: RenormConfig) -> float:
        if cfg.p0 is not None:
            return cfg.p0
        log10_p0 = self.estimate_p0_pde(cfg.tube_radius_p0 / 64.0, 1e-3, radius=cfg.tube_radius_p0)
        return 10.0 ** log10_p0

    def _window(self, gen: Generator, cfg: RenormConfig, t_prev: float, b: np.ndarray, t_n: float,
                u: np.ndarray) -> np.ndarray:
        """Path values at t_n * u given gamma(0) = 0 and gamma(t_prev) = b."""
        if cfg.forced_success:
            return math.sqrt(t_n) * self.geometry_service.gamma0_at(u)
        times = np.append(t_n * u, t_prev)
        free = self.brownian_service.free_values(gen, times, np.zeros(2))
        bridge = free + (times / t_prev)[:, None] * (b - free[-1])
        if np.max(np.abs(bridge[-1] - b)) > PIN_TOLERANCE * max(1.0, float(np.max(np.abs(b)))):
            raise BridgeConsistencyError(f"bridge pin at t={t_prev} moved from {b} to {bridge[-1]}")
        return bridge[:-1]

    def _cascade(self, gen: Generator, cfg: RenormConfig, p0: float) -> RenormTrace:
        steps = max(1, round(1.0 / cfg.dt_rel))
        u = np.linspace(1.0, 2.0, steps + 1)
        reference = self.geometry_service.gamma0(samples_per_segment=max(1, steps // 4))
        x0 = cfg.x0.as_array()
        t_prev = cfg.delta
        if cfg.forced_success:
            b = math.sqrt(t_prev) * self.geometry_service.gamma0_at(1.0)
        else:
            b = gen.normal(0.0, math.sqrt(2.0 * t_prev), size=2)
        first_point = (float(b[0]), float(b[1]))
        times, outcomes, distances, checks = [t_prev], [], [], []
        exit_time_bound: Optional[float] = None
        for level in range(1, cfg.n_levels + 1):
            t_n = self.choose_Tprime(Point2.from_array(b), t_prev, p0)
            window = self._window(gen, cfg, t_prev, b, t_n, u)
            segment = PathSample(u, window / math.sqrt(t_n))
            distance = self.geometry_service.sup_distance(segment, reference)
            close = distance < cfg.tube_radius_close
            status = ExitStatus.SKIPPED
            if close:
                if exit_time_bound is None:
                    exit_time_bound = 2.0 * t_n
                if math.sqrt(t_n) < cfg.resolution_factor * cfg.K.h:
                    status = ExitStatus.UNRESOLVED
                    logging.warning(f"RenormalizationService._cascade: level {level} window scale "
                                    f"{math.sqrt(t_n):.3g} below raster resolution; exit check unresolved")
                elif cfg.K.contains(x0 + window).all():
                    status = ExitStatus.CONTAINED
                    logging.error(f"RenormalizationService._cascade: level {level} path stayed in K")
                else:
                    status = ExitStatus.EXITED
            times.append(t_n)
            outcomes.append(bool(close))
            distances.append(distance)
            checks.append(status)
            t_prev, b = t_n, window[0]
        return RenormTrace(times=tuple(times), a_outcomes=tuple(outcomes), b_indicator=not any(outcomes),
                           sup_distances=tuple(distances), exit_checks=tuple(checks),
                           exit_time_bound=exit_time_bound, first_point=first_point)

    def _check_start(self, cfg: RenormConfig) -> None:
        x0 = cfg.x0.as_array()
        if cfg.K.contains(x0):
            return
        centres = cfg.K.occupied_centers()
        if len(centres) == 0 or np.min(np.hypot(*(centres - x0).T)) > math.sqrt(2.0) * cfg.K.h:
            raise ValueError(f"x0={cfg.x0} is not within one cell of K")

    def run_cascade(self, rng: RngSpec, cfg: RenormConfig) -> RenormTrace:
        """One cascade: gamma(T_0), then T_n = T'(gamma(T_{n-1}), T_{n-1}) with bridge-refined windows.

        Args:
            rng: Random stream
            cfg: Cascade configuration

        Returns:
            RenormTrace: Times, tube events, sup distances and exit checks
        """
        self._check_start(cfg)
        trace = self._cascade(rng.generator(), cfg, self.resolve_p0(cfg))
        logging.info(f"RenormalizationService.run_cascade: A={trace.a_outcomes} B={trace.b_indicator}")
        return trace

    def run_cascades(self, rng: RngSpec, cfg: RenormConfig, replicas: int) -> CascadeSummary:
        """Independent cascade replicas; replica r draws from sub-stream r."""
        if replicas < 1:
            raise ValueError("replicas must be positive")
        self._check_start(cfg)
        p0 = self.resolve_p0(cfg)
        traces = parallel_map(lambda r: self._cascade(rng.generator(r), cfg, p0), range(replicas))
        exit_counts = {status.value: 0 for status in ExitStatus}
        for trace in traces:
            for status in trace.exit_checks:
                exit_counts[status.value] += 1
        halving = sum(
            1 for trace in traces for a, b in zip(trace.times, trace.times[1:]) if not b < a / 2
        )
        summary = CascadeSummary(
            replicas=replicas,
            a1_frequency=float(np.mean([trace.a_outcomes[0] for trace in traces])),
            b_frequencies=tuple(
                float(np.mean([trace.b_prefix(n) for trace in traces])) for n in range(1, cfg.n_levels + 1)
            ),
            exit_counts=exit_counts,
            halving_violations=halving,
            traces=tuple(traces),
        )
        logging.info(f"RenormalizationService.run_cascades: replicas={replicas} A1={summary.a1_frequency:.4f} "
                     f"exits={exit_counts}")
        return summary

    # ---- separation -----------------------------------------------------

    def perturbation(self, gen: Generator, radius: float, times: np.ndarray) -> tuple[np.ndarray, int]:
        """Bridge pinned at 0 on [1, 2], scaled by radius/2, redrawn until its sup norm is below radius."""
        rejected = 0
        inner = times[1:-1]
        while True:
            values = self.brownian_service.bridge_values(gen, inner, times[0], np.zeros(2), times[-1], np.zeros(2))
            values = np.vstack([np.zeros((1, 2)), values, np.zeros((1, 2))]) * (radius / 2.0)
            if np.max(np.hypot(values[:, 0], values[:, 1])) < radius:
                return values, rejected
            rejected += 1

    def separation_stress(self, rng: RngSpec, n_perturb: int, radius: float, resolution: int = 512,
                          samples_per_segment: int = 32) -> SeparationReport:
        """Check that random perturbations of the reference path with sup norm below radius separate 0.

        Args:
            rng: Random stream; perturbation i draws from sub-stream i
            n_perturb: Number of perturbations
            radius: Sup-norm bound, below 1/2
            resolution: Raster resolution of the separation test
            samples_per_segment: Samples per affine segment of the reference path

        Returns:
            SeparationReport: Counterexample paths (expected none) and rejection count
        """
        if not 0 <= radius < 0.5:
            raise ValueError("radius must lie in [0, 1/2)")
        reference = self.geometry_service.gamma0(samples_per_segment)

        def run(i: int) -> tuple[Optional[PathSample], int, float]:
            if radius == 0:
                path, rejected = reference, 0
            else:
                offset, rejected = self.perturbation(rng.generator(i), radius, reference.times)
                path = PathSample(reference.times, reference.points + offset)
            distance = self.geometry_service.sup_distance(path, reference)
            separated = self.geometry_service.separates_origin(path, resolution)
            return (None if separated else path), rejected, distance

        results = parallel_map(run, range(n_perturb))
        counterexamples = tuple(path for path, _, _ in results if path is not None)
        report = SeparationReport(
            n_perturb=n_perturb,
            radius=radius,
            counterexamples=counterexamples,
            rejected=sum(r for _, r, _ in results),
            max_sup_distance=max((d for _, _, d in results), default=0.0),
        )
        if counterexamples:
            logging.error(f"RenormalizationService.separation_stress: {len(counterexamples)} counterexamples")
        return report

    def broken_control(self, resolution: int = 512) -> SeparationReport:
        """The reference path with its last vertex moved by (-3, 0); its trace does not separate 0."""
        reference = self.geometry_service.gamma0(1)
        points = reference.points.copy()
        points[-1] += np.array([-3.0, 0.0])
        path = PathSample(reference.times, points)
        separated = self.geometry_service.separates_origin(path, resolution)
        return SeparationReport(
            n_perturb=1,
            radius=3.0,
            counterexamples=() if separated else (path,),
            max_sup_distance=self.geometry_service.sup_distance(path, reference),
        )
