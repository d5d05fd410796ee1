import math
import unittest
from unittest.mock import patch

import numpy as np
from scipy.special import j1, jn_zeros

from thinlab.models.geometry import PathSample, Point2
from thinlab.models.sampling import DIVERGENCE_SUSPECT, RngSpec
from thinlab.services.brownian_service import BrownianService, step_count


class TestBrownianService(unittest.TestCase):

    def setUp(self):
        self.service = BrownianService(batch_size=500)
        self.geometry = self.service.geometry_service
        self.disc = self.geometry.disc(Point2(0.0, 0.0), 1.0, 1 / 32)

    def test_step_count(self):
        self.assertEqual(step_count(0.3, 1e-4), 3000)
        self.assertEqual(step_count(0.0, 1e-3), 0)

    def test_sample_path_starts_at_x0_and_is_reproducible(self):
        x0 = Point2(0.25, -0.5)
        path = self.service.sample_path(RngSpec(1), x0, 1.0, 0.01)
        again = self.service.sample_path(RngSpec(1), x0, 1.0, 0.01)
        self.assertEqual(len(path), 101)
        np.testing.assert_array_equal(path.points[0], [0.25, -0.5])
        np.testing.assert_array_equal(path.points, again.points)

    def test_increment_variance_is_two_dt(self):
        path = self.service.sample_path(RngSpec(2), Point2(0.0, 0.0), 20.0, 1e-3)
        increments = np.diff(path.points, axis=0)
        np.testing.assert_allclose(increments.var(axis=0), [2e-3, 2e-3], rtol=0.05)

    def test_sample_path_rejects_bad_step(self):
        with self.assertRaises(ValueError):
            self.service.sample_path(RngSpec(0), Point2(0.0, 0.0), 1.0, 2.0)

    def test_sample_path_step_must_divide_horizon(self):
        with self.assertRaisesRegex(ValueError, "not a multiple"):
            self.service.sample_path(RngSpec(0), Point2(0.0, 0.0), 1.0, 0.3)
        with self.assertRaisesRegex(ValueError, "not a multiple"):
            self.service.sample_bridge(RngSpec(0), Point2(0.0, 0.0), Point2(1.0, 0.0), 1.0, 0.3)
        self.assertEqual(len(self.service.sample_path(RngSpec(0), Point2(0.0, 0.0), 0.3, 0.1)), 4)

    def test_endpoint_variance_scales_with_time(self):
        ends = {}
        for T in (1.0, 4.0):
            ends[T] = np.array([self.service.sample_path(RngSpec(9, 0, (i,)), Point2(0.0, 0.0), T, 0.05).points[-1]
                                for i in range(3000)])
        np.testing.assert_allclose(ends[1.0].var(axis=0), [2.0, 2.0], rtol=0.1)
        np.testing.assert_allclose(ends[4.0].var(axis=0), [8.0, 8.0], rtol=0.1)

    def test_survival_is_invariant_under_brownian_scaling(self):
        small = self.geometry.disc(Point2(0.0, 0.0), 1.0, 1 / 32)
        large = self.geometry.disc(Point2(0.0, 0.0), 2.0, 1 / 16)
        first = self.service.survival_probability(RngSpec(12), Point2(0.25, 0.0), small, 0.1, 2000, 1e-3)
        scaled = self.service.survival_probability(RngSpec(12), Point2(0.5, 0.0), large, 0.4, 2000, 4e-3)
        self.assertAlmostEqual(first.p_hat, scaled.p_hat, delta=2 / 2000)

    def test_coarse_step_overestimates_survival(self):
        coarse = self.service.survival_probability(RngSpec(13), Point2(0.0, 0.0), self.disc, 0.2, 4000, 1e-2)
        fine = self.service.survival_probability(RngSpec(13), Point2(0.0, 0.0), self.disc, 0.2, 4000, 1e-4)
        self.assertGreater(coarse.p_hat, fine.p_hat)

    def test_sojourn_time_monotone_in_domain(self):
        inner = self.geometry.disc(Point2(0.0, 0.0), 0.5, 1 / 32)
        for i in range(200):
            path = self.service.sample_path(RngSpec(14, 0, (i,)), Point2(0.1, 0.0), 1.0, 1e-3)
            self.assertLessEqual(self.service.sojourn_time(path, inner), self.service.sojourn_time(path, self.disc))

    def test_survival_matches_first_mode_on_disc(self):
        bessel_root = float(jn_zeros(0, 1)[0])
        expected = 2.0 / (bessel_root * j1(bessel_root)) * math.exp(-bessel_root ** 2)
        service = BrownianService(batch_size=12500)
        disc = self.geometry.disc(Point2(0.0, 0.0), 1.0, 1 / 64)
        stats = service.survival_probability(RngSpec(15), Point2(0.0, 0.0), disc, 1.0, 50000, 1e-4)
        self.assertAlmostEqual(stats.p_hat, expected, delta=3 * stats.ci_half_width)

    def test_bridge_endpoints_exact(self):
        bridge = self.service.sample_bridge(RngSpec(3), Point2(0.0, 0.0), Point2(1.0, 2.0), 1.0, 0.01)
        np.testing.assert_array_equal(bridge.points[0], [0.0, 0.0])
        np.testing.assert_array_equal(bridge.points[-1], [1.0, 2.0])

    def test_bridge_midpoint_variance(self):
        mids = np.array([self.service.sample_bridge(RngSpec(20).spawn(i), Point2(0.0, 0.0), Point2(0.0, 0.0),
                                                    1.0, 0.05).value_at(0.5) for i in range(4000)])
        np.testing.assert_allclose(mids.mean(axis=0), [0.0, 0.0], atol=0.05)
        np.testing.assert_allclose(mids.var(axis=0), [2 * 0.5 * (1 - 0.5)] * 2, rtol=0.08)

    def test_bridge_values_midpoint_law(self):
        gen = RngSpec(4).generator()
        values = self.service.bridge_values(gen, np.array([0.5]), 0.0, np.zeros((20000, 2)), 1.0,
                                            np.array([2.0, 0.0]))
        mid = values[:, 0, :]
        np.testing.assert_allclose(mid.mean(axis=0), [1.0, 0.0], atol=0.03)
        np.testing.assert_allclose(mid.var(axis=0), [0.5, 0.5], rtol=0.05)

    def test_bridge_values_time_outside(self):
        with self.assertRaisesRegex(ValueError, "outside"):
            self.service.bridge_values(RngSpec(0).generator(), np.array([1.5]), 0.0, np.zeros(2), 1.0, np.zeros(2))

    def test_sojourn_time(self):
        path = PathSample(np.array([0.0, 0.1, 0.2, 0.3]),
                          np.array([[0.0, 0.0], [0.5, 0.0], [1.5, 0.0], [0.0, 0.0]]))
        self.assertAlmostEqual(self.service.sojourn_time(path, self.disc), 0.1)
        outside = path.translated((5.0, 0.0))
        self.assertEqual(self.service.sojourn_time(outside, self.disc), 0.0)

    def test_exit_indices_independent_of_thread_count(self):
        starts = np.array([[0.0, 0.0], [0.5, 0.0]])
        with patch('thinlab.utils.get_thread_count', return_value=1):
            serial = self.service.exit_indices(RngSpec(5), starts, 800, self.disc, 200, 1e-3)
        with patch('thinlab.utils.get_thread_count', return_value=4):
            threaded = self.service.exit_indices(RngSpec(5), starts, 800, self.disc, 200, 1e-3)
        self.assertEqual(serial.shape, (2, 800))
        np.testing.assert_array_equal(serial, threaded)

    def test_survival_probability_start_outside(self):
        stats = self.service.survival_probability(RngSpec(0), Point2(3.0, 0.0), self.disc, 0.1, 100, 1e-3)
        self.assertEqual(stats.survive, 0)

    def test_survival_probability_short_time(self):
        stats = self.service.survival_probability(RngSpec(0), Point2(0.0, 0.0), self.disc, 0.01, 1000, 1e-3)
        self.assertGreater(stats.p_hat, 0.99)

    def test_survival_probability_needs_enough_paths(self):
        with self.assertRaisesRegex(ValueError, "at least 100"):
            self.service.survival_probability(RngSpec(0), Point2(0.0, 0.0), self.disc, 0.1, 50, 1e-3)

    def test_exp_moment_below_lambda1(self):
        stats = self.service.exp_moment(RngSpec(6), Point2(0.0, 0.0), self.disc, 2.0, 2000, 1e-3, 5.0)
        self.assertGreater(stats.exp_moment_hat, 1.0)
        self.assertEqual(stats.flag, "")

    @patch('thinlab.services.brownian_service.logging')
    def test_exp_moment_truncation_flagged(self, mock_logging):
        stats = self.service.exp_moment(RngSpec(6), Point2(0.0, 0.0), self.disc, 1.0, 500, 1e-3, 0.05)
        self.assertTrue(stats.divergence_suspect)
        self.assertEqual(stats.flag, DIVERGENCE_SUSPECT)
        mock_logging.warning.assert_called_once()

    def test_markov_moment_bound(self):
        self.assertAlmostEqual(self.service.markov_moment_bound(0.5, 1.0, 0.1),
                               math.exp(0.1) / (1 - 0.5 * math.exp(0.1)))
        self.assertEqual(self.service.markov_moment_bound(0.5, 1.0, 1.0), math.inf)
        self.assertAlmostEqual(self.service.markov_moment_bound(0.0, 1.0, 1.0), math.e)

    def test_thinness_of_segment(self):
        segment = self.geometry.named_set("segment", 1 / 32)
        report = self.service.thinness_test(RngSpec(7), segment, 0.1, 0.1, [0.2, 0.1], 200, 1e-3)
        self.assertTrue(report.passed)
        self.assertEqual(report.pass_eps, 0.2)
        self.assertTrue(math.isfinite(report.moment_bound))
        self.assertEqual(len(report.rows), 2 * segment.count)

    def test_filled_square_is_not_thin(self):
        block = self.geometry.named_set("filled-square", 1 / 16)
        report = self.service.thinness_test(RngSpec(8), block, 0.1, 0.1, [0.1], 100, 1e-3)
        self.assertFalse(report.passed)
        self.assertIsNone(report.moment_bound)

    def test_thinness_schedule_must_decrease(self):
        segment = self.geometry.named_set("segment", 1 / 32)
        with self.assertRaisesRegex(ValueError, "strictly decreasing"):
            self.service.thinness_test(RngSpec(0), segment, 0.1, 0.1, [0.1, 0.2], 100, 1e-3)


if __name__ == '__main__':
    unittest.main()
