"""Random streams and Monte Carlo sojourn statistics."""
import math
from dataclasses import dataclass, field
from typing import Optional

from numpy.random import Generator, PCG64, SeedSequence

DIVERGENCE_SUSPECT = "divergence-suspect"


@dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream: identical (seed, stream) gives identical draws."""
    seed: int
    stream: int = 0
    sub_key: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.seed < 0 or self.stream < 0 or any(k < 0 for k in self.sub_key):
            raise ValueError("seed, stream and sub-key entries must be non-negative")

    def generator(self, *sub_key: int) -> Generator:
        """Generator for this stream, or for a sub-stream such as one batch of it.

        Args:
            *sub_key: Extra spawn-key entries, e.g. the batch index

        Returns:
            Generator: PCG64 generator seeded from SeedSequence(seed, spawn_key=(stream, *self.sub_key, *sub_key))
        """
        key = (self.stream, *self.sub_key, *(int(k) for k in sub_key))
        return Generator(PCG64(SeedSequence(self.seed, spawn_key=key)))

    def spawn(self, *sub_key: int) -> "RngSpec":
        """The sub-stream that generator(*sub_key) draws from, as a spec of its own."""
        return RngSpec(self.seed, self.stream, self.sub_key + tuple(int(k) for k in sub_key))

    def child(self, stream: int) -> "RngSpec":
        return RngSpec(self.seed, stream)


@dataclass(frozen=True)
class SojournStats:
    """Survival and exponential-moment estimates for one start point."""
    n: int
    threshold_t: float
    survive: int
    p_hat: float
    ci_half_width: float
    exp_moment_hat: Optional[float] = None
    exp_moment_ci: Optional[float] = None
    truncated: int = 0
    flag: str = ""
    mean_sojourn: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0 <= self.survive <= self.n:
            raise ValueError(f"survive={self.survive} outside [0, {self.n}]")
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError(f"p_hat={self.p_hat} outside [0, 1]")

    @classmethod
    def from_counts(cls, n: int, threshold_t: float, survive: int, **extra) -> "SojournStats":
        """Build from a survivor count with the 95% normal-approximation half width."""
        p_hat = survive / n
        half_width = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / n)
        return cls(n=n, threshold_t=threshold_t, survive=survive, p_hat=p_hat,
                   ci_half_width=half_width, **extra)

    @property
    def divergence_suspect(self) -> bool:
        return self.flag == DIVERGENCE_SUSPECT


@dataclass(frozen=True)
class MarkovCheck:
    """P(T > k t) against delta_hat^k."""
    k: int
    p_hat: float
    sigma: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.p_hat <= self.bound + 3.0 * self.sigma


@dataclass(frozen=True)
class ThinnessLevel:
    """Survival statistics for one dilation radius."""
    eps: float
    sup_p_hat: float
    sup_ci: float
    worst_start: tuple[float, float]
    passed: bool
    markov: tuple[MarkovCheck, ...] = ()


@dataclass(frozen=True)
class ThinnessRow:
    """One line of the thinness statistics table."""
    eps: float
    t: float
    x0x: float
    x0y: float
    n: int
    p_hat: float
    ci: float
    flag: str = ""


@dataclass(frozen=True)
class ThinnessReport:
    """Outcome of the quantitative thinness test over a dilation schedule."""
    t: float
    delta: float
    levels: tuple[ThinnessLevel, ...]
    rows: tuple[ThinnessRow, ...] = field(default=(), repr=False)
    pass_eps: Optional[float] = None
    moment_bound: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.pass_eps is not None

    @property
    def markov_holds(self) -> bool:
        return all(check.holds for level in self.levels for check in level.markov)
