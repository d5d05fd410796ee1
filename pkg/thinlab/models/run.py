"""Scenario configuration and run summaries."""
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Optional


class AssertionStatus(Enum):
    """Outcome of one in-scenario assertion."""
    PASSED = "passed"
    FAILED = "failed"


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved configuration of one scenario run (scenario defaults merged with the file)."""
    scenario: str
    seed: int
    output_dir: str
    values: dict[str, str] = field(default_factory=dict)

    def get_str(self, key: str) -> str:
        if key not in self.values:
            raise ValueError(f"Missing required setting: '{key}'")
        return self.values[key]

    def get_float(self, key: str) -> float:
        return float(Fraction(self.get_str(key)))

    def get_int(self, key: str) -> int:
        return int(self.get_str(key))

    def get_bool(self, key: str) -> bool:
        return self.get_str(key).strip().lower() in ("1", "true", "yes", "on")

    def get_floats(self, key: str) -> list[float]:
        raw = self.get_str(key).strip()
        if not raw:
            return []
        return [float(Fraction(part.strip())) for part in raw.split(",")]

    def get_point(self, key: str) -> tuple[float, float]:
        values = self.get_floats(key)
        if len(values) != 2:
            raise ValueError(f"setting '{key}' must be two comma-separated numbers")
        return values[0], values[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "output_dir": self.output_dir,
            **dict(sorted(self.values.items())),
        }


@dataclass(frozen=True)
class AssertionResult:
    """A named check with the metric it was judged on."""
    name: str
    status: AssertionStatus
    value: Optional[float] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == AssertionStatus.PASSED


@dataclass(frozen=True)
class RunSummary:
    """Everything a run reports: config echo, metrics, assertions and artifacts."""
    scenario: str
    seed: int
    wall_time: float
    config: dict[str, Any]
    metrics: dict[str, float]
    assertions: tuple[AssertionResult, ...]
    artifacts: tuple[str, ...]
    flags: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    def failed_assertions(self) -> list[AssertionResult]:
        return [a for a in self.assertions if not a.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "config": self.config,
            "metrics": self.metrics,
            "assertions": [
                {"name": a.name, "status": a.status.value, "value": a.value, "detail": a.detail}
                for a in self.assertions
            ],
            "artifacts": list(self.artifacts),
            "flags": self.flags,
            "exit_status": self.exit_status,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunSummary":
        assertions = tuple(
            AssertionResult(
                name=a["name"],
                status=AssertionStatus(a["status"]),
                value=a.get("value"),
                detail=a.get("detail", ""),
            )
            for a in data.get("assertions", [])
        )
        return cls(
            scenario=data["scenario"],
            seed=int(data["seed"]),
            wall_time=float(data.get("wall_time", 0.0)),
            config=dict(data["config"]),
            metrics=dict(data.get("metrics", {})),
            assertions=assertions,
            artifacts=tuple(data.get("artifacts", [])),
            flags=dict(data.get("flags", {})),
        )


@dataclass(frozen=True)
class Scenario:
    """A named, registered experiment: its configurable keys with defaults and its runner.

    The runner is called as runner(config, monitor, repo) and reports through the monitor.
    """
    name: str
    defaults: dict[str, str]
    runner: Callable[..., None]
    description: str = ""
