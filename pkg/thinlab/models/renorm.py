"""Configuration and records of the renormalized-path cascade."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from thinlab.models.geometry import PathSample, Point2, RasterSet


class ExitStatus(Enum):
    """Outcome of the raster check that the window path leaves K."""
    SKIPPED = "skipped"
    EXITED = "exited"
    CONTAINED = "contained"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class RenormConfig:
    """Parameters of one cascade run."""
    delta: float
    n_levels: int
    K: RasterSet
    x0: Point2
    tube_radius_close: float = 0.5
    tube_radius_p0: float = 1.0 / 3.0
    dt_rel: float = 1.0 / 256.0
    p0: Optional[float] = None
    forced_success: bool = False
    resolution_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.n_levels < 1:
            raise ValueError("n_levels must be at least 1")
        if not 0 < self.tube_radius_p0 < self.tube_radius_close:
            raise ValueError("need 0 < tube_radius_p0 < tube_radius_close")
        if not 0 < self.dt_rel <= 0.5:
            raise ValueError("dt_rel must lie in (0, 0.5]")
        if self.p0 is not None and not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")


@dataclass(frozen=True)
class RenormTrace:
    """Times, tube events and exit checks of one cascade replica."""
    times: tuple[float, ...]
    a_outcomes: tuple[bool, ...]
    b_indicator: bool
    sup_distances: tuple[float, ...]
    exit_checks: tuple[ExitStatus, ...]
    exit_time_bound: Optional[float] = None
    first_point: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for t_prev, t_next in zip(self.times, self.times[1:]):
            if not t_next < t_prev / 2:
                raise ValueError(f"level times must more than halve, got {t_prev} -> {t_next}")
        if self.exit_time_bound is not None and self.exit_time_bound > 2 * self.times[0]:
            raise ValueError("exit time bound exceeds 2*T_0")

    def b_prefix(self, n: int) -> bool:
        """B_n: none of A_1..A_n held."""
        return not any(self.a_outcomes[:n])

    def to_dict(self) -> dict[str, Any]:
        return {
            "times": list(self.times),
            "a_outcomes": list(self.a_outcomes),
            "b_indicator": self.b_indicator,
            "exit_time_bound": self.exit_time_bound,
            "sup_distances": list(self.sup_distances),
            "exit_checks": [status.value for status in self.exit_checks],
            "first_point": list(self.first_point),
        }


@dataclass(frozen=True)
class CascadeSummary:
    """Aggregate of independent cascade replicas."""
    replicas: int
    a1_frequency: float
    b_frequencies: tuple[float, ...]
    exit_counts: dict[str, int]
    halving_violations: int
    traces: tuple[RenormTrace, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class LawCheckReport:
    """Two-sample comparison of the bridge construction against the explicit representation."""
    n: int
    p_values: dict[str, float]
    threshold: float

    @property
    def passed(self) -> bool:
        return all(p > self.threshold for p in self.p_values.values())

    @property
    def min_p_value(self) -> float:
        return min(self.p_values.values())


@dataclass(frozen=True)
class SeparationReport:
    """Result of testing random tube perturbations of the reference path for separation."""
    n_perturb: int
    radius: float
    counterexamples: tuple[PathSample, ...] = field(default=(), repr=False)
    rejected: int = 0
    max_sup_distance: float = 0.0

    @property
    def counterexample_count(self) -> int:
        return len(self.counterexamples)
