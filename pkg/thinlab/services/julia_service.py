"""Service for raster filled Julia sets and Julia sets of polynomials."""
import logging
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from thinlab.config import THINLAB_JULIA_MAX_ITER
from thinlab.models.geometry import RasterSet
from thinlab.models.polynomial import PolynomialMap, coefficient_escape_radius
from thinlab.models.sampling import RngSpec
from thinlab.services.geometry_service import PlaneGeometryService

BBox = tuple[float, float, float, float]


class JuliaService:
    """Escape-time classification of cell centres and boundary extraction."""

    def __init__(self, geometry_service: Optional[PlaneGeometryService] = None) -> None:
        self.geometry_service = geometry_service or PlaneGeometryService()

    # noinspection PyMethodMayBeStatic
    def escape_radius(self, coefficients: tuple[complex, ...] | list[complex]) -> float:
        """R = max(2, (2 + sum_{i<d}|a_i|)/|a_d|); orbits leaving the R-disc diverge."""
        return coefficient_escape_radius(tuple(coefficients))

    def make_map(self, coefficients: list[complex], max_iter: int = THINLAB_JULIA_MAX_ITER) -> PolynomialMap:
        return PolynomialMap(tuple(complex(a) for a in coefficients), self.escape_radius(coefficients), max_iter)

    # noinspection PyMethodMayBeStatic
    def _grid(self, bbox: BBox, resolution: int) -> RasterSet:
        xmin, xmax, ymin, ymax = bbox
        if resolution < 2:
            raise ValueError("resolution must be at least 2")
        h = (xmax - xmin) / resolution
        ny = int(round((ymax - ymin) / h))
        return RasterSet(xmin, xmax, ymin, ymax, np.zeros((ny, resolution), dtype=bool))

    def filled_julia(self, poly: PolynomialMap, bbox: BBox, resolution: int) -> RasterSet:
        """Cells whose centre orbit stays within the escape radius for max_iter iterations.

        Args:
            poly: Polynomial map
            bbox: (xmin, xmax, ymin, ymax); must contain the disc of radius poly.escape_radius
            resolution: Cells along x

        Returns:
            RasterSet: Approximate filled Julia set
        """
        xmin, xmax, ymin, ymax = bbox
        r = poly.escape_radius
        if xmin > -r or xmax < r or ymin > -r or ymax < r:
            raise ValueError(f"bbox {bbox} does not contain the escape disc of radius {r}")
        grid = self._grid(bbox, resolution)
        xs, ys = np.meshgrid(grid.x_centers(), grid.y_centers())
        z = (xs + 1j * ys).ravel()
        active = np.flatnonzero(np.abs(z) <= r)  # indices still bounded
        zk = z[active]
        for _ in range(poly.max_iter):
            if len(active) == 0:
                break
            zk = poly(zk)
            keep = np.abs(zk) <= r
            active, zk = active[keep], zk[keep]
        occ = np.zeros(z.shape, dtype=bool)
        occ[active] = True
        logging.debug(f"JuliaService.filled_julia: {len(active)} bounded cells of {z.size}")
        return grid.with_occupancy(occ.reshape(grid.occupancy.shape))

    def julia_set(self, poly: PolynomialMap, bbox: BBox, resolution: int) -> RasterSet:
        """Raster Julia set: boundary of the basin of infinity of the filled set."""
        filled = self.filled_julia(poly, bbox, resolution)
        return self.geometry_service.boundary_of_unbounded_component(filled)

    def area_ratio(self, poly: PolynomialMap, bbox: BBox, resolution: int) -> float:
        """Area of the raster Julia set at h/2 over its area at h."""
        coarse = self.julia_set(poly, bbox, resolution)
        fine = self.julia_set(poly, bbox, 2 * resolution)
        ratio = fine.area / coarse.area
        logging.info(f"JuliaService.area_ratio: area {coarse.area:.5f} -> {fine.area:.5f} (ratio {ratio:.3f})")
        return ratio

    # noinspection PyMethodMayBeStatic
    def forward_invariance_defect(self, poly: PolynomialMap, raster: RasterSet, n: int, rng: RngSpec) -> float:
        """Largest excess over 2h*Lip(P) of the distance from P(z) to the raster, over n sampled cells.

        Lip(P) is estimated as max |P'| over the cell centres of the bounding box.
        A result of 0 means every sampled image landed within tolerance.
        """
        centres = raster.occupied_centers()
        if len(centres) == 0:
            raise ValueError("empty set")
        gen = rng.generator()
        picks = gen.choice(len(centres), size=min(n, len(centres)), replace=False)
        z = centres[picks, 0] + 1j * centres[picks, 1]
        w = poly(z)
        tree = cKDTree(centres)
        distance, _ = tree.query(np.column_stack([w.real, w.imag]))
        xs, ys = np.meshgrid(raster.x_centers(), raster.y_centers())
        lip = float(np.max(np.abs(poly.derivative(xs + 1j * ys))))
        excess = float(np.max(distance - 2.0 * raster.h * lip))
        return max(0.0, excess)
