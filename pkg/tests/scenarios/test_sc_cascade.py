import os
import tempfile
import unittest

from thinlab import cli
from thinlab.scenarios import sc_cascade

SMALL = ("n_levels = 2\nreplicas = 20\np0 = 0.3\npde_dt = 1e-2\nK_resolution = 201\n"
         "resolution_factor = 2\n")


class TestCascadeScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _run(self, out):
        config = cli.parse_config_text(SMALL, sc_cascade, seed=5, output_dir=out)
        return cli.run_scenario(sc_cascade, config)

    def test_small_cascade(self):
        summary = self._run(self.tmp.name)
        statuses = {a.name: a.passed for a in summary.assertions}
        for name in ("halving", "a1_frequency", "exit_checks_resolved", "exit_from_K", "forced_a_n", "forced_exit"):
            self.assertTrue(statuses[name], name)
        self.assertGreater(summary.metrics["exit_exited"], 0)
        self.assertEqual(summary.metrics["exit_contained"], 0)
        self.assertIn("cascade.csv", summary.artifacts)
        self.assertIn("forced_trace.json", summary.artifacts)
        with open(os.path.join(self.tmp.name, "cascade.csv")) as f:
            self.assertEqual(len(f.read().splitlines()), 1 + 20 * 2)

    def test_rerun_is_byte_identical(self):
        first = os.path.join(self.tmp.name, "a")
        second = os.path.join(self.tmp.name, "b")
        self._run(first)
        self._run(second)
        for name in ("cascade.csv", "cascade_summary.json", "forced_trace.json"):
            self.assertIsNone(cli.first_difference(os.path.join(first, name), os.path.join(second, name)), name)


if __name__ == '__main__':
    unittest.main()
