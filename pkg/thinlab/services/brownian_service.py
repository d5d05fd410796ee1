"""Service for Brownian paths, bridges and sojourn statistics.

All simulation uses the generator Delta: each coordinate increment over a
step dt is Gaussian with variance 2*dt.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator

from thinlab.config import THINLAB_BATCH_SIZE
from thinlab.models.geometry import PathSample, Point2, RasterSet
from thinlab.models.sampling import (
    DIVERGENCE_SUSPECT,
    MarkovCheck,
    RngSpec,
    SojournStats,
    ThinnessLevel,
    ThinnessReport,
    ThinnessRow,
)
from thinlab.services.geometry_service import PlaneGeometryService
from thinlab.utils import parallel_map

MAX_THINNESS_STARTS = 1000
START_DRAW_KEY = 2**31 - 1


def step_count(t: float, dt: float) -> int:
    """Number of steps of size dt needed to reach time t."""
    return max(0, math.ceil(t / dt - 1e-9))


class BrownianService:
    """Monte Carlo over Brownian paths killed on leaving a raster set."""

    def __init__(self, geometry_service: Optional[PlaneGeometryService] = None,
                 batch_size: int = THINLAB_BATCH_SIZE) -> None:
        self.geometry_service = geometry_service or PlaneGeometryService()
        self.batch_size = batch_size

    # noinspection PyMethodMayBeStatic
    def _time_grid(self, T: float, dt: float) -> np.ndarray:
        if T <= 0 or dt <= 0:
            raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
        if dt > T * (1 + 1e-12):
            raise ValueError(f"dt={dt} exceeds T={T}")
        steps = T / dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        return np.linspace(0.0, T, round(steps) + 1)

    def sample_path(self, rng: RngSpec, x0: Point2, T: float, dt: float) -> PathSample:
        """Brownian path on {0, dt, ..., T} started at x0.

        Args:
            rng: Random stream
            x0: Start point (the first sample equals it exactly)
            T: Horizon
            dt: Time step

        Returns:
            PathSample: round(T/dt)+1 samples
        """
        times = self._time_grid(T, dt)
        gen = rng.generator()
        steps = gen.normal(0.0, 1.0, size=(len(times) - 1, 2)) * np.sqrt(2.0 * np.diff(times))[:, None]
        points = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)]) + x0.as_array()
        points[0] = x0.as_array()
        return PathSample(times, points)

    def sample_bridge(self, rng: RngSpec, x0: Point2, b: Point2, T: float, dt: float) -> PathSample:
        """Brownian bridge x0 + B_t + (t/T)((b - x0) - B_T) with both endpoints exact."""
        times = self._time_grid(T, dt)
        gen = rng.generator()
        steps = gen.normal(0.0, 1.0, size=(len(times) - 1, 2)) * np.sqrt(2.0 * np.diff(times))[:, None]
        free = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
        target = b.as_array() - x0.as_array()
        points = x0.as_array() + free + (times / T)[:, None] * (target - free[-1])
        points[0] = x0.as_array()
        points[-1] = b.as_array()
        return PathSample(times, points)

    # noinspection PyMethodMayBeStatic
    def bridge_values(self, gen: Generator, times: np.ndarray, t_start: float, x_start: np.ndarray,
                      t_end: float, x_end: np.ndarray) -> np.ndarray:
        """Sample a bridge pinned at (t_start, x_start) and (t_end, x_end) at sorted interior times.

        Values are drawn left to right from the exact conditional laws, so they are
        consistent with the two pins. x_start and x_end may carry a leading batch axis.

        Returns:
            np.ndarray: Shape (..., len(times), 2)
        """
        x_end = np.asarray(x_end, dtype=float)
        x_prev = np.broadcast_to(np.asarray(x_start, dtype=float), np.broadcast(x_start, x_end).shape).copy()
        t_prev = t_start
        values = []
        for s in np.asarray(times, dtype=float):
            if not t_prev <= s < t_end:
                raise ValueError(f"bridge time {s} outside [{t_prev}, {t_end})")
            if s == t_prev:
                values.append(x_prev)
                continue
            weight = (s - t_prev) / (t_end - t_prev)
            mean = x_prev + weight * (x_end - x_prev)
            sd = math.sqrt(2.0 * (s - t_prev) * (t_end - s) / (t_end - t_prev))
            x_prev = mean + sd * gen.standard_normal(mean.shape)
            t_prev = s
            values.append(x_prev)
        return np.stack(values, axis=-2)

    # noinspection PyMethodMayBeStatic
    def free_values(self, gen: Generator, times: np.ndarray, x_start: np.ndarray, t_start: float = 0.0) -> np.ndarray:
        """Free Brownian values at sorted times after (t_start, x_start); shape (..., len(times), 2)."""
        x = np.asarray(x_start, dtype=float)
        t_prev = t_start
        values = []
        for s in np.asarray(times, dtype=float):
            x = x + math.sqrt(2.0 * (s - t_prev)) * gen.standard_normal(x.shape)
            t_prev = s
            values.append(x)
        return np.stack(values, axis=-2)

    # noinspection PyMethodMayBeStatic
    def sojourn_time(self, path: PathSample, domain: RasterSet) -> float:
        """Time of the last sample up to which every sample lies in an occupied cell; 0 if the first is outside."""
        inside = domain.contains(path.points)
        if not inside[0]:
            return 0.0
        outside = np.flatnonzero(~inside)
        k = len(inside) - 1 if len(outside) == 0 else int(outside[0]) - 1
        return float(path.times[k] - path.times[0])

    # noinspection PyMethodMayBeStatic
    def _run_batch(self, gen: Generator, starts: np.ndarray, domain: RasterSet, n_steps: int, dt: float) -> np.ndarray:
        """Last all-inside step index per path (-1 if the start is outside, n_steps if it survives)."""
        m = len(starts)
        last = np.full(m, n_steps, dtype=np.int64)
        inside = domain.contains(starts)
        last[~inside] = -1
        alive = np.flatnonzero(inside)
        pos = starts[alive].copy()
        sigma = math.sqrt(2.0 * dt)
        for step in range(1, n_steps + 1):
            if len(alive) == 0:
                break
            pos += sigma * gen.standard_normal(pos.shape)
            keep = domain.contains(pos)
            last[alive[~keep]] = step - 1
            alive, pos = alive[keep], pos[keep]
        return last

    def exit_indices(self, rng: RngSpec, starts: np.ndarray, n: int, domain: RasterSet,
                     n_steps: int, dt: float, key: Sequence[int] = ()) -> np.ndarray:
        """Simulate n killed paths per start; returns last-inside indices of shape (len(starts), n).

        Paths are split into fixed-size batches; batch b draws from sub-stream (*key, b),
        so the result does not depend on the number of worker threads.
        """
        starts = np.asarray(starts, dtype=float).reshape(-1, 2)
        flat = np.repeat(starts, n, axis=0)
        n_batches = max(1, math.ceil(len(flat) / self.batch_size))

        def run(b: int) -> np.ndarray:
            chunk = flat[b * self.batch_size:(b + 1) * self.batch_size]
            return self._run_batch(rng.generator(*key, b), chunk, domain, n_steps, dt)

        last = np.concatenate(parallel_map(run, range(n_batches)))
        return last.reshape(len(starts), n)

    def survival_probability(self, rng: RngSpec, x0: Point2, domain: RasterSet, t: float, n: int,
                             dt: float) -> SojournStats:
        """Monte Carlo estimate of P^x0(T_domain >= t) with a 95% normal-approximation interval.

        Args:
            rng: Random stream
            x0: Start point
            domain: Set the paths are killed on leaving
            t: Threshold time
            n: Number of paths (at least 100)
            dt: Time step

        Returns:
            SojournStats: Survivor count and estimate
        """
        if n < 100:
            raise ValueError(f"n must be at least 100, got {n}")
        if dt <= 0 or t < 0:
            raise ValueError("need dt > 0 and t >= 0")
        n_t = step_count(t, dt)
        last = self.exit_indices(rng, x0.as_array()[None, :], n, domain, n_t, dt)[0]
        survive = int(np.sum(last >= n_t))
        mean_sojourn = float(np.mean(np.maximum(last, 0)) * dt)
        stats = SojournStats.from_counts(n, t, survive, mean_sojourn=mean_sojourn)
        logging.debug(f"BrownianService.survival_probability: x0={x0} t={t} p_hat={stats.p_hat:.4f}")
        return stats

    def exp_moment(self, rng: RngSpec, x0: Point2, domain: RasterSet, lam: float, n: int, dt: float,
                   t_cap: float) -> SojournStats:
        """Monte Carlo estimate of E^x0[exp(lam * min(T, t_cap))].

        The result is flagged divergence-suspect when more than 1% of the paths reach
        the cap or the capped paths carry more than 5% of the estimate.
        """
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        if not math.isfinite(t_cap) or t_cap <= 0:
            raise ValueError("t_cap must be finite and positive")
        if n < 1 or dt <= 0:
            raise ValueError("need n >= 1 and dt > 0")
        n_cap = step_count(t_cap, dt)
        last = self.exit_indices(rng, x0.as_array()[None, :], n, domain, n_cap, dt)[0]
        sojourn = np.maximum(last, 0) * dt
        truncated = int(np.sum(last >= n_cap))
        values = np.exp(lam * sojourn)
        estimate = float(np.mean(values))
        ci = 1.96 * float(np.std(values)) / math.sqrt(n)
        tail_weight = math.exp(min(lam * n_cap * dt, 700.0)) * truncated / n
        flag = ""
        if truncated / n > 0.01 or tail_weight > 0.05 * estimate:
            flag = DIVERGENCE_SUSPECT
            logging.warning(
                f"BrownianService.exp_moment: lambda={lam} truncated={truncated}/{n} "
                f"tail weight {tail_weight:.3g} of {estimate:.3g}; marked {flag}"
            )
        return SojournStats(
            n=n,
            threshold_t=t_cap,
            survive=truncated,
            p_hat=truncated / n,
            ci_half_width=1.96 * math.sqrt((truncated / n) * (1 - truncated / n) / n),
            exp_moment_hat=estimate,
            exp_moment_ci=ci,
            truncated=truncated,
            flag=flag,
            mean_sojourn=float(np.mean(sojourn)),
        )

    # noinspection PyMethodMayBeStatic
    def markov_moment_bound(self, delta: float, t: float, lam: float) -> float:
        """Sum over k >= 0 of delta^k exp(lam (k+1) t); infinite when log(delta) + lam t >= 0."""
        if not 0 <= delta <= 1 or t <= 0 or lam < 0:
            raise ValueError("need 0 <= delta <= 1, t > 0 and lam >= 0")
        growth = math.exp(lam * t)
        if delta == 0:
            return growth
        if math.log(delta) + lam * t >= 0:
            return math.inf
        return growth / (1.0 - delta * growth)

    def thinness_test(self, rng: RngSpec, lambda_set: RasterSet, t: float, delta: float,
                      eps_schedule: Sequence[float], n: int, dt: float,
                      moment_lambda: Optional[float] = None) -> ThinnessReport:
        """Quantitative thinness: sup over start points of P^x(T_{dilate(set, eps)} > t) against delta.

        Args:
            rng: Random stream
            lambda_set: The compact set under test
            t: Time threshold
            delta: Survival threshold
            eps_schedule: Strictly decreasing dilation radii
            n: Paths per start point
            dt: Time step
            moment_lambda: Rate for the exponential-moment bound (default -log(delta)/(2t))

        Returns:
            ThinnessReport: Per-eps statistics, the first passing eps and Markov-iterate checks
        """
        eps_list = [float(e) for e in eps_schedule]
        if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ValueError("eps_schedule must be non-empty and strictly decreasing")
        if not 0 < delta < 1 or t <= 0:
            raise ValueError("need 0 < delta < 1 and t > 0")
        starts = lambda_set.occupied_centers()
        if len(starts) == 0:
            raise ValueError("empty set")
        if len(starts) > MAX_THINNESS_STARTS:
            picks = rng.generator(START_DRAW_KEY).choice(len(starts), MAX_THINNESS_STARTS, replace=False)
            starts = starts[np.sort(picks)]
        n_t = max(1, step_count(t, dt))

        levels: list[ThinnessLevel] = []
        rows: list[ThinnessRow] = []
        pass_eps: Optional[float] = None
        pass_bound = 0.0
        for e_index, eps in enumerate(eps_list):
            domain = self.geometry_service.dilate(lambda_set, eps)
            last = self.exit_indices(rng, starts, n, domain, 3 * n_t, dt, key=(e_index,))
            p = {k: np.mean(last >= k * n_t, axis=1) for k in (1, 2, 3)}
            ci = 1.96 * np.sqrt(p[1] * (1 - p[1]) / n)
            upper = p[1] + ci
            worst = int(np.argmax(upper))
            passed = bool(upper[worst] <= delta)
            delta_hat = float(np.max(p[1]))
            checks = []
            for k in (2, 3):
                sigma = np.sqrt(p[k] * (1 - p[k]) / n)
                slack = p[k] - delta_hat ** k - 3 * sigma
                w = int(np.argmax(slack))
                checks.append(MarkovCheck(k=k, p_hat=float(p[k][w]), sigma=float(sigma[w]), bound=delta_hat ** k))
            levels.append(ThinnessLevel(
                eps=eps, sup_p_hat=float(p[1][worst]), sup_ci=float(ci[worst]),
                worst_start=(float(starts[worst, 0]), float(starts[worst, 1])),
                passed=passed, markov=tuple(checks),
            ))
            flag = "pass" if passed else "fail"
            rows.extend(
                ThinnessRow(eps, t, float(x[0]), float(x[1]), n, float(ph), float(c), flag)
                for x, ph, c in zip(starts, p[1], ci)
            )
            logging.info(
                f"BrownianService.thinness_test: eps={eps} sup p_hat={p[1][worst]:.4f} "
                f"(+{ci[worst]:.4f}) {'PASS' if passed else 'fail'}"
            )
            if passed and pass_eps is None:
                pass_eps, pass_bound = eps, float(upper[worst])

        moment_bound = None
        if pass_eps is not None:
            lam = moment_lambda if moment_lambda is not None else -math.log(delta) / (2 * t)
            moment_bound = self.markov_moment_bound(min(1.0, pass_bound), t, lam)
        return ThinnessReport(t=t, delta=delta, levels=tuple(levels), rows=tuple(rows),
                              pass_eps=pass_eps, moment_bound=moment_bound)
