import tempfile
import unittest

from thinlab import cli
from thinlab.models.sampling import RngSpec
from thinlab.scenarios import sc_eigen
from thinlab.scenarios.sc_eigen import certificate_violations, monotone_violations
from thinlab.services.dirichlet_service import DirichletService


class TestEigenScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _run(self, text):
        config = cli.parse_config_text(text, sc_eigen, seed=1, output_dir=self.tmp.name)
        return cli.run_scenario(sc_eigen, config)

    def test_grid_unit_square(self):
        summary = self._run("shape = unit-square\nh = 1/64\n")
        self.assertTrue(summary.passed, summary.failed_assertions())
        self.assertLess(summary.metrics["lambda1_relative_error"], 0.01)
        self.assertEqual(set(summary.artifacts), {"domain.pgm", "domain.json", "eigen_grid.json"})

    def test_unknown_method(self):
        with self.assertRaisesRegex(ValueError, "unknown method"):
            self._run("method = power\nh = 1/16\n")

    def test_shape_without_reference(self):
        summary = self._run("shape = segment\nh = 1/32\n")
        self.assertEqual(summary.assertions, ())
        self.assertIn("lambda1", summary.metrics)

    def test_phi_checks(self):
        summary = self._run("shape = unit-disc\nh = 1/32\nphi_lambda = 3\nphi_ratio_min = 1\n")
        names = [a.name for a in summary.assertions]
        self.assertIn("phi_residual_converges", names)
        self.assertIn("phi_residuals.csv", summary.artifacts)

    def test_monotone_pairs(self):
        self.assertEqual(monotone_violations(DirichletService(), RngSpec(0), 2, h=1 / 32), 0)

    def test_certificates_are_sound(self):
        certified, violations, rows = certificate_violations(DirichletService(), RngSpec(0), 3, h=1 / 16)
        self.assertEqual(violations, 0)
        self.assertLessEqual(certified, 3)
        self.assertEqual(len(rows), 3)
        for _, _, lam, lambda1, is_certified, _, green_residual, implied_gap in rows:
            self.assertLess(green_residual, 1e-4)
            self.assertAlmostEqual(implied_gap, lambda1 - lam, delta=1e-4 * lambda1)
            if is_certified:
                self.assertGreaterEqual(implied_gap, -1e-4 * lambda1)


if __name__ == '__main__':
    unittest.main()
