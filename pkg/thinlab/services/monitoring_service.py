"""Service for tracking scenario runs: metrics, assertions, artifacts and flags."""
import logging
import math
from enum import Enum
from typing import Any, Optional

from thinlab.models.run import AssertionResult, AssertionStatus, RunSummary, ScenarioConfig


class RunStatus(Enum):
    """Run lifecycle status."""
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


# noinspection PyMethodMayBeStatic
class MonitoringService:
    """Service for collecting what a scenario run reports."""

    def __init__(self) -> None:
        self.status = RunStatus.PENDING
        self.config: Optional[ScenarioConfig] = None
        self.metrics: dict[str, float] = {}
        self.assertions: list[AssertionResult] = []
        self.artifacts: list[str] = []
        self.flags: dict[str, str] = {}

    def start_run(self, config: ScenarioConfig) -> None:
        """Start tracking a run; clears anything recorded before.

        Args:
            config: Resolved scenario configuration
        """
        self.status = RunStatus.IN_PROGRESS
        self.config = config
        self.metrics, self.assertions, self.artifacts, self.flags = {}, [], [], {}
        logging.info(f"Started run: scenario={config.scenario} seed={config.seed} out={config.output_dir}")

    def record_metric(self, name: str, value: Any) -> None:
        """Record a numeric metric; non-finite values become flags instead."""
        number = float(value)
        if not math.isfinite(number):
            self.flag(name, "nan" if math.isnan(number) else ("inf" if number > 0 else "-inf"))
            return
        self.metrics[name] = number
        logging.debug(f"MonitoringService.record_metric: {name}={number!r}")

    def record_assertion(self, name: str, passed: bool, value: Optional[float] = None, detail: str = "") -> bool:
        """Record a named in-scenario check.

        Args:
            name: Assertion name
            passed: Whether it held
            value: Metric it was judged on (non-finite values are dropped and flagged)
            detail: Human-readable threshold description

        Returns:
            bool: passed
        """
        if value is not None and not math.isfinite(float(value)):
            self.flag(name, f"non-finite value {value}")
            value = None
        status = AssertionStatus.PASSED if passed else AssertionStatus.FAILED
        self.assertions.append(AssertionResult(name, status, None if value is None else float(value), detail))
        if not passed:
            logging.warning(f"Assertion failed: {name} value={value} ({detail})")
        return passed

    def record_artifact(self, name: str) -> str:
        if name not in self.artifacts:
            self.artifacts.append(name)
        return name

    def flag(self, name: str, message: str) -> None:
        self.flags[name] = message
        logging.warning(f"MonitoringService.flag: {name}: {message}")

    def complete_run(self, wall_time: float) -> RunSummary:
        """Close the run and build its summary.

        Args:
            wall_time: Elapsed seconds

        Returns:
            RunSummary: Config echo, metrics, assertions, artifacts and flags
        """
        if self.config is None:
            raise RuntimeError("complete_run called before start_run")
        summary = RunSummary(
            scenario=self.config.scenario,
            seed=self.config.seed,
            wall_time=wall_time,
            config=self.config.to_dict(),
            metrics=dict(self.metrics),
            assertions=tuple(self.assertions),
            artifacts=tuple(self.artifacts),
            flags=dict(self.flags),
        )
        self.status = RunStatus.COMPLETED if summary.passed else RunStatus.FAILED
        logging.info(f"Run {self.config.scenario} completed with status: {self.status.value}")
        return summary
