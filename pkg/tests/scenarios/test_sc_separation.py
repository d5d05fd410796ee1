import tempfile
import unittest

from thinlab import cli
from thinlab.scenarios import sc_separation


class TestSeparationScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_small_stress(self):
        text = "n_perturb = 5\nsamples_per_segment = 16\nneighbourhood_h = 1/16\n"
        config = cli.parse_config_text(text, sc_separation, seed=3, output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_separation, config)
        self.assertTrue(summary.passed, summary.failed_assertions())
        self.assertEqual([a.name for a in summary.assertions], ["all_separate", "control_detected"])
        self.assertEqual(summary.metrics["counterexamples"], 0)
        self.assertIn("gamma0_neighbourhood.pgm", summary.artifacts)

    def test_radius_out_of_range(self):
        config = cli.parse_config_text("radius = 0.6\n", sc_separation, output_dir=self.tmp.name)
        with self.assertRaises(ValueError):
            cli.run_scenario(sc_separation, config)


if __name__ == '__main__':
    unittest.main()
