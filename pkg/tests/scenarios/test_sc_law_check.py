import csv
import os
import tempfile
import unittest

from thinlab import cli
from thinlab.scenarios import sc_law_check


class TestLawCheckScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_small_law_check(self):
        config = cli.parse_config_text("n = 2000\nn_grid = 16\n", sc_law_check, seed=0, output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_law_check, config)
        self.assertEqual([a.name for a in summary.assertions], ["bridge_matches_explicit", "explicit_matches_free"])
        with open(os.path.join(self.tmp.name, "law_check.csv")) as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 16)
        self.assertEqual({row["comparison"] for row in rows}, {"bridge_vs_explicit", "explicit_vs_free"})
        self.assertAlmostEqual(float(rows[0]["threshold"]), 0.01 / 8)

    def test_without_free_check(self):
        config = cli.parse_config_text("n = 500\nn_grid = 8\nfree_check = false\n", sc_law_check,
                                       output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_law_check, config)
        self.assertEqual(len(summary.assertions), 1)
        self.assertNotIn("min_p_value_free", summary.metrics)


if __name__ == '__main__':
    unittest.main()
