"""Cell fields over raster domains and eigenvalue results."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from thinlab.models.geometry import RasterSet


class EigenMethod(Enum):
    """How an eigenvalue was obtained."""
    GRID = "grid"
    STOCHASTIC = "stochastic"
    CERTIFICATE = "certificate"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the occupied cells of a domain.

    values follows the row-major order of the domain's occupied cells
    (the order of ``np.flatnonzero(domain.occupancy)``).
    """
    domain: RasterSet
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).ravel()
        if len(values) != self.domain.count:
            raise ValueError(
                f"field has {len(values)} values for {self.domain.count} occupied cells"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_grid(cls, domain: RasterSet, grid: np.ndarray) -> "ScalarField":
        """Pick the occupied-cell values out of a full (ny, nx) array."""
        return cls(domain, np.asarray(grid, dtype=float)[domain.occupancy])

    def to_grid(self, fill: float = 0.0) -> np.ndarray:
        """Expand to a full (ny, nx) array with ``fill`` on unoccupied cells."""
        grid = np.full(self.domain.occupancy.shape, fill, dtype=float)
        grid[self.domain.occupancy] = self.values
        return grid

    def value_at_cell(self, point: np.ndarray) -> float:
        """Value of the cell containing ``point``; raises if that cell is not occupied."""
        col, row, valid = self.domain.cell_index(np.asarray(point, dtype=float))
        if not bool(valid) or not self.domain.occupancy[row, col]:
            raise ValueError(f"point {tuple(point)} is not in an occupied cell")
        return float(self.to_grid()[row, col])

    def restricted_to(self, mask: np.ndarray) -> np.ndarray:
        """Values on the occupied cells also set in the (ny, nx) ``mask``."""
        return self.to_grid(np.nan)[mask & self.domain.occupancy]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0


@dataclass(frozen=True)
class PhiDiagnostics:
    """Pointwise checks of Delta(phi) = lambda + |grad phi|^2 for phi = -log psi."""
    residual: float
    tol: float
    min_laplacian_excess: float
    max_gradient_excess: float
    cells_checked: int

    @property
    def inequalities_hold(self) -> bool:
        return self.min_laplacian_excess >= -self.tol and self.max_gradient_excess <= self.tol


@dataclass(frozen=True)
class CertificateReport:
    """Supersolution check -Delta(psi) >= lambda*psi on a domain with zero exterior."""
    certified: bool
    lam: float
    positive: bool
    min_ratio: float
    green_residual: Optional[float] = None
    implied_gap: Optional[float] = None
    cells: int = 0


@dataclass(frozen=True)
class EigenResult:
    """First Dirichlet eigenvalue of a raster domain."""
    lambda1: float
    method: EigenMethod
    h: float
    components: tuple[float, ...] = ()
    eigenfunction: Optional[ScalarField] = field(default=None, repr=False, compare=False)
    ci: Optional[tuple[float, float]] = None
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "lambda1": self.lambda1,
            "method": self.method.value,
            "h": self.h,
            "components": list(self.components),
        }
        if self.ci is not None:
            data["ci"] = list(self.ci)
        if self.details:
            data["details"] = dict(self.details)
        return data
