import tempfile
import unittest

from thinlab import cli
from thinlab.scenarios import sc_thinness


class TestThinnessScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _run(self, text):
        config = cli.parse_config_text(text, sc_thinness, seed=7, output_dir=self.tmp.name)
        return cli.run_scenario(sc_thinness, config)

    def test_segment_is_thin(self):
        summary = self._run("set = segment\nh = 1/32\neps_schedule = 0.2,0.1\nn = 200\n")
        statuses = {a.name: a.passed for a in summary.assertions}
        self.assertTrue(statuses["thin"])
        self.assertEqual(summary.metrics["pass_eps"], 0.2)
        self.assertIn("thinness_levels.csv", summary.artifacts)

    def test_filled_square_is_not_thin(self):
        summary = self._run("set = filled-square\nh = 1/16\neps_schedule = 0.1\nn = 100\nexpect = fail\n")
        statuses = {a.name: a.passed for a in summary.assertions}
        self.assertTrue(statuses["not_thin"])
        self.assertNotIn("pass_eps", summary.metrics)

    def test_bad_expectation(self):
        with self.assertRaisesRegex(ValueError, "expect must be"):
            self._run("expect = maybe\n")


if __name__ == '__main__':
    unittest.main()
