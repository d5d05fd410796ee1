import math
import unittest
from unittest.mock import MagicMock, patch

import numpy as np
from scipy import stats

from thinlab.errors import BridgeConsistencyError
from thinlab.models.geometry import PathSample, Point2
from thinlab.models.renorm import ExitStatus, RenormConfig
from thinlab.models.sampling import RngSpec
from thinlab.services.renormalization_service import LAW_CHECK_LEVEL, RenormalizationService


class TestRenormalizationService(unittest.TestCase):

    def setUp(self):
        self.service = RenormalizationService()
        self.geometry = self.service.geometry_service
        # thin ring standing in for the unit-circle Julia set
        self.K = self.geometry.annulus(Point2(0.0, 0.0), 0.99, 1.01, 1 / 128)

    def _config(self, **overrides):
        settings = dict(delta=1.0, n_levels=3, K=self.K, x0=Point2(1.0, 0.0), tube_radius_close=10.0,
                        tube_radius_p0=2.0, p0=0.3)
        settings.update(overrides)
        return RenormConfig(**settings)

    def test_init_shares_geometry_service(self):
        self.assertIs(self.service.brownian_service.geometry_service, self.geometry)
        self.assertIs(self.service.dirichlet_service.brownian_service, self.service.brownian_service)

    # ---- tube probability ----

    def test_free_tube_probability(self):
        self.assertGreater(self.service.free_tube_probability(10.0), 0.999)
        self.assertLess(self.service.free_tube_probability(0.5), self.service.free_tube_probability(1.0))

    def test_estimate_p0_pde_grid_too_coarse(self):
        with self.assertRaisesRegex(ValueError, "at most radius/64"):
            self.service.estimate_p0_pde(0.1, 1e-3, radius=1.0 / 3.0)

    def test_estimate_p0_pde_unknown_scheme(self):
        with self.assertRaisesRegex(ValueError, "unknown scheme"):
            self.service.estimate_p0_pde(1.0 / 192.0, 1e-3, scheme="crank")

    def test_estimate_p0_pde_explicit_step_too_large(self):
        with self.assertRaisesRegex(ValueError, "stability bound"):
            self.service.estimate_p0_pde(1.0 / 192.0, 1e-3, scheme="explicit")

    def test_estimate_p0_pde_small_tube(self):
        log10_p0 = self.service.estimate_p0_pde(1.0 / 192.0, 1e-3)
        self.assertTrue(math.isfinite(log10_p0))
        self.assertLess(log10_p0, 0.0)

    def test_estimate_p0_pde_wide_tube_matches_gaussian(self):
        p0 = 10.0 ** self.service.estimate_p0_pde(10.0 / 64.0, 1e-3, radius=10.0)
        self.assertAlmostEqual(p0, self.service.free_tube_probability(10.0), delta=0.05)

    def test_estimate_p0_pde_monotone_in_radius(self):
        narrow = self.service.estimate_p0_pde(1.0 / 64.0, 1e-2, radius=1.0)
        wide = self.service.estimate_p0_pde(2.0 / 64.0, 1e-2, radius=2.0)
        self.assertLess(narrow, wide)

    def test_tube_probability_mc_wide_tube(self):
        result = self.service.tube_probability_mc(RngSpec(1), 10.0, 2000, 0.05)
        self.assertEqual(result.n, 2000)
        self.assertAlmostEqual(result.p_hat, self.service.free_tube_probability(10.0), delta=0.02)

    def test_tube_probability_mc_reproducible(self):
        first = self.service.tube_probability_mc(RngSpec(2), 2.0, 1000, 0.05)
        second = self.service.tube_probability_mc(RngSpec(2), 2.0, 1000, 0.05)
        self.assertEqual(first.survive, second.survive)

    # ---- T' rule and renormalized segments ----

    def test_choose_tprime(self):
        b, T, p0 = Point2(3.0, 4.0), 2.0, 0.2
        q = stats.rayleigh.isf(0.1)
        c = (5.0 + q * math.sqrt(4.0)) / 2.0
        expected = min(1.0, (1 / (12 * c)) ** 2) * (1 - 1e-9)
        self.assertAlmostEqual(self.service.choose_Tprime(b, T, p0), expected, places=15)

    def test_choose_tprime_below_half(self):
        tp = self.service.choose_Tprime(Point2(0.0, 0.0), 1e-6, 0.9)
        self.assertLess(tp, 0.5e-6)

    def test_choose_tprime_constants_rule(self):
        b, T, p0 = Point2(1.0, -2.0), 0.7, 0.3
        tp = self.service.choose_Tprime(b, T, p0)
        c = (b.norm() + stats.rayleigh.isf(p0 / 2) * math.sqrt(2 * T)) / T
        self.assertLess(math.sqrt(tp) * 2 * c, 1 / 6)

    def test_choose_tprime_invalid(self):
        with self.assertRaises(ValueError):
            self.service.choose_Tprime(Point2(0.0, 0.0), 1.0, 1.0)
        with self.assertRaises(ValueError):
            self.service.choose_Tprime(Point2(0.0, 0.0), 0.0, 0.5)

    def test_renormalized_segment(self):
        times = np.linspace(0.0, 1.0, 101)
        path = PathSample(times, np.column_stack([times, np.zeros_like(times)]))
        segment = self.service.renormalized_segment(path, 0.25)
        self.assertEqual(segment.t_start, 1.0)
        self.assertEqual(segment.t_end, 2.0)
        np.testing.assert_allclose(segment.points[:, 0], 0.5 * segment.times)

    def test_renormalized_segment_increment_variance(self):
        path = self.service.brownian_service.sample_path(RngSpec(21), Point2(0.0, 0.0), 1.0, 1e-5)
        segment = self.service.renormalized_segment(path, 0.5)
        increments = np.diff(segment.points, axis=0)
        spacing = np.diff(segment.times)
        np.testing.assert_allclose(spacing, 2e-5, rtol=1e-6)
        np.testing.assert_allclose((increments ** 2).mean(axis=0) / spacing.mean(), [2.0, 2.0], rtol=0.03)

    def test_renormalized_segment_not_covered(self):
        times = np.linspace(0.0, 1.0, 11)
        path = PathSample(times, np.zeros((11, 2)))
        with self.assertRaisesRegex(ValueError, "does not cover"):
            self.service.renormalized_segment(path, 0.6)

    # ---- conditioned law ----

    def test_conditioned_segments_shapes(self):
        rng = RngSpec(0)
        for method in ("bridge", "explicit", "free"):
            segments = self.service.sample_conditioned_segments(rng, Point2(0.5, 0.5), 1.0, 0.1, 7, method, 8)
            self.assertEqual(segments.shape, (7, 9, 2))
        with self.assertRaisesRegex(ValueError, "unknown method"):
            self.service.sample_conditioned_segments(rng, Point2(0.0, 0.0), 1.0, 0.1, 7, "other", 8)

    def test_bridge_segments_come_from_sample_bridge(self):
        brownian = self.service.brownian_service
        with patch.object(brownian, 'sample_bridge', wraps=brownian.sample_bridge) as mock_bridge, \
                patch.object(self.service, 'renormalized_segment',
                             wraps=self.service.renormalized_segment) as mock_segment:
            segments = self.service.sample_conditioned_segments(RngSpec(1), Point2(0.5, 0.5), 1.0, 0.125, 3,
                                                                "bridge", 8)
        self.assertEqual(mock_bridge.call_count, 3)
        self.assertEqual(mock_segment.call_count, 3)
        _, x0, b, T, dt = mock_bridge.call_args.args
        self.assertEqual((x0, b, T), (Point2(0.0, 0.0), Point2(0.5, 0.5), 1.0))
        self.assertAlmostEqual(dt, 0.125 / 8)
        path = brownian.sample_bridge(RngSpec(1).spawn(2), Point2(0.0, 0.0), Point2(0.5, 0.5), 1.0, 0.125 / 8)
        expected = self.service.renormalized_segment(path, 0.125).value_at(np.linspace(1.0, 2.0, 9))
        np.testing.assert_allclose(segments[2], expected)

    def test_bridge_segments_distinct_per_path(self):
        segments = self.service.sample_conditioned_segments(RngSpec(1), Point2(0.0, 0.0), 1.0, 0.125, 2, "bridge", 8)
        self.assertFalse(np.allclose(segments[0], segments[1]))

    def test_law_check_grid_must_divide_horizon(self):
        with self.assertRaisesRegex(ValueError, "not a multiple"):
            self.service.conditioned_law_check(RngSpec(0), Point2(0.0, 0.0), 1.0, 0.3, 100, n_grid=8)

    def test_conditioned_law_check_passes(self):
        report = self.service.conditioned_law_check(RngSpec(3), Point2(0.5, -0.3), 1.0, 0.125, 4000, n_grid=16)
        self.assertEqual(len(report.p_values), 8)
        self.assertAlmostEqual(report.threshold, LAW_CHECK_LEVEL / 8)
        self.assertTrue(report.passed, report.p_values)

    def test_law_comparison_detects_drift(self):
        rng = RngSpec(4)
        bridge = self.service.segment_statistics(rng, Point2(5.0, 0.0), 1.0, 0.125, 2000, "bridge", key=0, n_grid=16)
        free = self.service.segment_statistics(rng, Point2(5.0, 0.0), 1.0, 0.125, 2000, "free", key=1, n_grid=16)
        p_values = self.service.compare_segment_laws(bridge, free)
        self.assertLess(p_values["mean_x"], 1e-6)

    def test_law_check_window_too_large(self):
        with self.assertRaisesRegex(ValueError, "Tp < T/2"):
            self.service.conditioned_law_check(RngSpec(0), Point2(0.0, 0.0), 1.0, 0.5, 100)

    def test_segment_statistics_even_grid(self):
        with self.assertRaisesRegex(ValueError, "even"):
            self.service.segment_statistics(RngSpec(0), Point2(0.0, 0.0), 1.0, 0.1, 10, "bridge", key=0, n_grid=7)

    # ---- cascade ----

    def test_resolve_p0_uses_configured_value(self):
        with patch.object(self.service, 'estimate_p0_pde') as mock_estimate:
            self.assertEqual(self.service.resolve_p0(self._config()), 0.3)
            mock_estimate.assert_not_called()

    def test_resolve_p0_estimates_at_p0_radius(self):
        with patch.object(self.service, 'estimate_p0_pde', return_value=-1.0) as mock_estimate:
            self.assertAlmostEqual(self.service.resolve_p0(self._config(p0=None)), 0.1)
            mock_estimate.assert_called_once_with(2.0 / 64.0, 1e-3, radius=2.0)

    def test_forced_cascade(self):
        cfg = self._config(delta=16.0, n_levels=2, tube_radius_close=0.5, tube_radius_p0=1 / 3, p0=0.5,
                           forced_success=True)
        trace = self.service.run_cascade(RngSpec(0), cfg)
        self.assertEqual(trace.a_outcomes, (True, True))
        self.assertAlmostEqual(trace.times[1], 0.00527, delta=1e-4)
        self.assertEqual(trace.exit_checks, (ExitStatus.EXITED, ExitStatus.UNRESOLVED))
        self.assertEqual(trace.exit_time_bound, 2 * trace.times[1])
        self.assertLess(max(trace.sup_distances), 1e-9)

    def test_run_cascades(self):
        summary = self.service.run_cascades(RngSpec(5), self._config(), 40)
        self.assertEqual(summary.replicas, 40)
        self.assertEqual(summary.halving_violations, 0)
        self.assertEqual(sum(summary.exit_counts.values()), 40 * 3)
        self.assertTrue(all(b >= a for a, b in zip(summary.b_frequencies[1:], summary.b_frequencies)))
        for trace in summary.traces:
            if trace.exit_time_bound is not None:
                self.assertLessEqual(trace.exit_time_bound, 2 * trace.times[0])

    def test_stochastic_cascade_exit_checks_resolve(self):
        summary = self.service.run_cascades(RngSpec(8), self._config(delta=16.0, n_levels=2), 30)
        self.assertGreater(summary.exit_counts[ExitStatus.EXITED.value], 0)
        self.assertEqual(summary.exit_counts[ExitStatus.CONTAINED.value], 0)

    def test_run_cascades_independent_of_thread_count(self):
        with patch('thinlab.utils.get_thread_count', return_value=1):
            serial = self.service.run_cascades(RngSpec(6), self._config(), 12)
        with patch('thinlab.utils.get_thread_count', return_value=4):
            threaded = self.service.run_cascades(RngSpec(6), self._config(), 12)
        self.assertEqual([t.times for t in serial.traces], [t.times for t in threaded.traces])
        self.assertEqual(serial.exit_counts, threaded.exit_counts)

    def test_cascade_start_far_from_k(self):
        with self.assertRaisesRegex(ValueError, "not within one cell of K"):
            self.service.run_cascade(RngSpec(0), self._config(x0=Point2(0.0, 0.0)))

    def test_window_pin_mismatch(self):
        brownian = MagicMock()
        brownian.free_values.side_effect = lambda gen, times, x: np.full((len(times), 2), 1e20)
        service = RenormalizationService(self.geometry, brownian)
        u = np.linspace(1.0, 2.0, 5)
        with self.assertRaises(BridgeConsistencyError):
            service._window(RngSpec(0).generator(), self._config(), 1.0, np.array([0.5, 0.5]), 0.1, u)

    # ---- separation ----

    def test_perturbation_pinned_and_bounded(self):
        times = self.geometry.gamma0(8).times
        values, rejected = self.service.perturbation(RngSpec(0).generator(), 0.45, times)
        np.testing.assert_array_equal(values[0], [0.0, 0.0])
        np.testing.assert_array_equal(values[-1], [0.0, 0.0])
        self.assertLess(np.max(np.hypot(*values.T)), 0.45)
        self.assertGreaterEqual(rejected, 0)

    def test_separation_stress(self):
        report = self.service.separation_stress(RngSpec(7), 20, 0.45, resolution=256, samples_per_segment=16)
        self.assertEqual(report.counterexample_count, 0)
        self.assertLess(report.max_sup_distance, 0.45)

    def test_separation_radius_zero_is_reference(self):
        report = self.service.separation_stress(RngSpec(0), 2, 0.0, resolution=128, samples_per_segment=4)
        self.assertEqual(report.counterexample_count, 0)
        self.assertEqual(report.max_sup_distance, 0.0)

    def test_separation_radius_too_large(self):
        with self.assertRaisesRegex(ValueError, r"\[0, 1/2\)"):
            self.service.separation_stress(RngSpec(0), 1, 0.5)

    def test_broken_control_is_detected(self):
        report = self.service.broken_control(resolution=256)
        self.assertEqual(report.counterexample_count, 1)
        self.assertAlmostEqual(report.max_sup_distance, 3.0)


if __name__ == '__main__':
    unittest.main()
