import unittest
from unittest.mock import patch

from thinlab.models.run import AssertionStatus, ScenarioConfig
from thinlab.services.monitoring_service import MonitoringService, RunStatus


class TestMonitoringService(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.service = MonitoringService()
        self.config = ScenarioConfig("eigen", 3, "runs/eigen", {"h": "1/64"})

    def test_init(self):
        """Test a fresh service is pending and empty."""
        self.assertEqual(self.service.status, RunStatus.PENDING)
        self.assertIsNone(self.service.config)
        self.assertEqual(self.service.metrics, {})

    def test_start_run_clears_previous_records(self):
        """Test starting a run resets everything recorded before."""
        self.service.start_run(self.config)
        self.service.record_metric("x", 1.0)
        self.service.record_assertion("a", True)
        self.service.start_run(self.config)
        self.assertEqual(self.service.status, RunStatus.IN_PROGRESS)
        self.assertEqual(self.service.metrics, {})
        self.assertEqual(self.service.assertions, [])

    def test_record_metric(self):
        self.service.start_run(self.config)
        self.service.record_metric("lambda1", 19)
        self.assertEqual(self.service.metrics, {"lambda1": 19.0})

    @patch('thinlab.services.monitoring_service.logging')
    def test_non_finite_metric_becomes_flag(self, mock_logging):
        """Test nan and inf metrics are flagged, not stored."""
        self.service.start_run(self.config)
        self.service.record_metric("moment", float("inf"))
        self.service.record_metric("ratio", float("nan"))
        self.assertEqual(self.service.metrics, {})
        self.assertEqual(self.service.flags, {"moment": "inf", "ratio": "nan"})
        self.assertEqual(mock_logging.warning.call_count, 2)

    @patch('thinlab.services.monitoring_service.logging')
    def test_record_assertion(self, mock_logging):
        self.service.start_run(self.config)
        self.assertTrue(self.service.record_assertion("ok", True, 0.5, "below 1"))
        self.assertFalse(self.service.record_assertion("bad", False, 2.0, "below 1"))
        self.assertEqual([a.status for a in self.service.assertions],
                         [AssertionStatus.PASSED, AssertionStatus.FAILED])
        mock_logging.warning.assert_called_once()

    def test_record_assertion_non_finite_value(self):
        """Test a non-finite assertion value is dropped and flagged."""
        self.service.start_run(self.config)
        self.service.record_assertion("bound", True, float("inf"))
        self.assertIsNone(self.service.assertions[0].value)
        self.assertIn("bound", self.service.flags)

    def test_record_artifact_is_unique(self):
        self.service.record_artifact("a.csv")
        self.service.record_artifact("a.csv")
        self.assertEqual(self.service.artifacts, ["a.csv"])

    def test_complete_run_before_start(self):
        with self.assertRaises(RuntimeError):
            self.service.complete_run(0.0)

    def test_complete_run_passed(self):
        """Test a run with only passing assertions completes."""
        self.service.start_run(self.config)
        self.service.record_metric("lambda1", 19.7)
        self.service.record_assertion("ok", True)
        summary = self.service.complete_run(1.5)
        self.assertEqual(self.service.status, RunStatus.COMPLETED)
        self.assertEqual(summary.scenario, "eigen")
        self.assertEqual(summary.seed, 3)
        self.assertEqual(summary.config["h"], "1/64")
        self.assertEqual(summary.exit_status, 0)

    def test_complete_run_failed(self):
        self.service.start_run(self.config)
        self.service.record_assertion("bad", False)
        summary = self.service.complete_run(0.1)
        self.assertEqual(self.service.status, RunStatus.FAILED)
        self.assertEqual(summary.exit_status, 1)


if __name__ == '__main__':
    unittest.main()
