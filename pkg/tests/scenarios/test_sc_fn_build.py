import csv
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from thinlab import cli
from thinlab.models.field import ScalarField
from thinlab.scenarios import sc_fn_build
from thinlab.services.dirichlet_service import DirichletService
from thinlab.services.geometry_service import PlaneGeometryService


class TestFnBuildScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_segment_build(self):
        text = "h = 1/64\nn_values = 2,3\n"
        config = cli.parse_config_text(text, sc_fn_build, output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_fn_build, config)
        statuses = {a.name: a.passed for a in summary.assertions}
        for name in ("laplacian_f_2", "laplacian_f_3", "max_abs_decreasing", "control_rejected"):
            self.assertTrue(statuses[name], name)
        self.assertEqual(summary.metrics["eps_2"], 0.2)
        self.assertEqual(summary.metrics["eps_3"], 0.1)
        with open(os.path.join(self.tmp.name, "fn_build.csv")) as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row["n"] for row in rows], ["2", "3"])
        self.assertIn("f_2_domain.pgm", summary.artifacts)

    @patch.object(DirichletService, 'build_fn')
    def test_max_abs_is_taken_over_the_set(self, mock_build):
        geometry = PlaneGeometryService()
        segment = geometry.named_set("segment", 1 / 32)
        domain = geometry.dilate(segment, 0.2)
        on_set = geometry.embed(segment, domain).occupancy[domain.occupancy]

        def build(lambda_set, n, eps_search, headroom):
            return ScalarField(domain, np.where(on_set, -1.0 / n, -5.0)), 0.2

        mock_build.side_effect = build
        config = cli.parse_config_text("h = 1/32\nn_values = 2,3\ncontrol_set =\n", sc_fn_build,
                                       output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_fn_build, config)
        self.assertAlmostEqual(summary.metrics["max_abs_f_2"], 0.5)
        self.assertAlmostEqual(summary.metrics["max_abs_f_3"], 1 / 3)
        statuses = {a.name: a.passed for a in summary.assertions}
        self.assertTrue(statuses["max_abs_decreasing"])
        self.assertEqual(mock_build.call_count, 2)

    def test_without_control(self):
        config = cli.parse_config_text("h = 1/32\nn_values = 2\ncontrol_set =\n", sc_fn_build,
                                       output_dir=self.tmp.name)
        summary = cli.run_scenario(sc_fn_build, config)
        self.assertNotIn("control_rejected", [a.name for a in summary.assertions])


if __name__ == '__main__':
    unittest.main()
