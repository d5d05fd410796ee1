"""Service for planar rasters: shapes, dilation, connectivity and path separation."""
import logging
import math

import numpy as np
from scipy import ndimage
from skimage.morphology import flood

from thinlab.models.geometry import PathSample, Point2, RasterSet

GAMMA0_TIMES: tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
GAMMA0_VERTICES: tuple[tuple[float, float], ...] = ((-2.0, 1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 2.0))

_EIGHT_NEIGHBOURS = np.ones((3, 3), dtype=bool)


# noinspection PyMethodMayBeStatic
class PlaneGeometryService:
    """Raster geometry for sets, neighbourhoods and paths."""

    def gamma0(self, samples_per_segment: int = 1) -> PathSample:
        """Piecewise-affine reference path on [1, 2] through the five reference vertices.

        Args:
            samples_per_segment: Affine sub-steps per segment (1 gives the vertices only)

        Returns:
            PathSample: 4*samples_per_segment + 1 samples, endpoints included
        """
        if samples_per_segment < 1:
            raise ValueError("samples_per_segment must be at least 1")
        times = [GAMMA0_TIMES[0]]
        for k in range(len(GAMMA0_TIMES) - 1):
            t0, t1 = GAMMA0_TIMES[k], GAMMA0_TIMES[k + 1]
            for m in range(1, samples_per_segment + 1):
                times.append(t1 if m == samples_per_segment else t0 + (t1 - t0) * m / samples_per_segment)
        times_arr = np.array(times)
        return PathSample(times_arr, self.gamma0_at(times_arr))

    def gamma0_at(self, t: np.ndarray | float) -> np.ndarray:
        """Reference path evaluated at time(s) in [1, 2]."""
        vertices = np.array(GAMMA0_VERTICES)
        tt = np.asarray(t, dtype=float)
        return np.stack([np.interp(tt, GAMMA0_TIMES, vertices[:, 0]),
                         np.interp(tt, GAMMA0_TIMES, vertices[:, 1])], axis=-1)

    def gamma0_velocities(self) -> list[tuple[float, float, np.ndarray]]:
        """(t_start, t_end, velocity) of each affine segment."""
        vertices = np.array(GAMMA0_VERTICES)
        segments = []
        for k in range(len(GAMMA0_TIMES) - 1):
            t0, t1 = GAMMA0_TIMES[k], GAMMA0_TIMES[k + 1]
            segments.append((t0, t1, (vertices[k + 1] - vertices[k]) / (t1 - t0)))
        return segments

    def _centres(self, grid: RasterSet) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(grid.x_centers(), grid.y_centers())

    def rectangle(
            self, x0: float, x1: float, y0: float, y1: float, h: float,
            closed: bool = False, margin_cells: int = 2
    ) -> RasterSet:
        """Node-aligned raster of a rectangle.

        Open rectangles keep the cell centres strictly inside (a Dirichlet domain);
        closed ones also keep centres on the edges (a compact set).
        """
        grid = RasterSet.node_aligned(x0, x1, y0, y1, h, margin_cells)
        xs, ys = self._centres(grid)
        tol = 1e-9 * h * (-1 if closed else 1)
        occ = (xs > x0 + tol) & (xs < x1 - tol) & (ys > y0 + tol) & (ys < y1 - tol)
        return grid.with_occupancy(occ)

    def disc(self, center: Point2, radius: float, h: float, closed: bool = False, margin_cells: int = 2) -> RasterSet:
        grid = RasterSet.node_aligned(center.x - radius, center.x + radius,
                                      center.y - radius, center.y + radius, h, margin_cells)
        xs, ys = self._centres(grid)
        r = np.hypot(xs - center.x, ys - center.y)
        occ = r <= radius + 1e-9 * h if closed else r < radius - 1e-9 * h
        return grid.with_occupancy(occ)

    def annulus(self, center: Point2, r_in: float, r_out: float, h: float, margin_cells: int = 2) -> RasterSet:
        grid = RasterSet.node_aligned(center.x - r_out, center.x + r_out,
                                      center.y - r_out, center.y + r_out, h, margin_cells)
        xs, ys = self._centres(grid)
        r = np.hypot(xs - center.x, ys - center.y)
        return grid.with_occupancy((r >= r_in) & (r <= r_out))

    def segment(self, p: Point2, q: Point2, h: float, margin_cells: int = 2) -> RasterSet:
        """Cells whose centres lie within h/2 of the closed segment [p, q]."""
        grid = RasterSet.node_aligned(min(p.x, q.x), max(p.x, q.x), min(p.y, q.y), max(p.y, q.y),
                                      h, margin_cells)
        xs, ys = self._centres(grid)
        d = _distance_to_segment(np.stack([xs, ys], axis=-1), p.as_array(), q.as_array())
        return grid.with_occupancy(d <= 0.5 * h + 1e-9 * h)

    def point(self, p: Point2, h: float, margin_cells: int = 2) -> RasterSet:
        """The single cell containing p."""
        return self.segment(p, p, h, margin_cells)

    def area(self, raster: RasterSet) -> float:
        """Occupied cells times h^2."""
        return raster.area

    def named_set(self, name: str, h: float) -> RasterSet:
        """Shapes that scenario files refer to by name."""
        origin = Point2(0.0, 0.0)
        if name == "unit-square":
            return self.rectangle(0.0, 1.0, 0.0, 1.0, h)
        if name == "rectangle-1x2":
            return self.rectangle(0.0, 1.0, 0.0, 2.0, h)
        if name == "filled-square":
            return self.rectangle(-0.5, 0.5, -0.5, 0.5, h, closed=True)
        if name == "unit-disc":
            return self.disc(origin, 1.0, h)
        if name == "two-discs":
            return self.union(self.disc(Point2(-1.5, 0.0), 1.0, h), self.disc(Point2(1.5, 0.0), 0.5, h))
        if name == "segment":
            return self.segment(Point2(-0.5, 0.0), Point2(0.5, 0.0), h)
        if name == "point":
            return self.point(origin, h)
        raise ValueError(f"unknown shape '{name}'")

    def pad(self, raster: RasterSet, cells: int) -> RasterSet:
        """Grow the bounding box by whole empty cells on every side."""
        if cells <= 0:
            return raster
        h = raster.h
        occ = np.pad(raster.occupancy, cells, constant_values=False)
        return RasterSet(raster.xmin - cells * h, raster.xmax + cells * h,
                         raster.ymin - cells * h, raster.ymax + cells * h, occ)

    def embed(self, raster: RasterSet, target: RasterSet) -> RasterSet:
        """Copy raster's occupancy onto target's grid (same h, cell-aligned, large enough)."""
        h = target.h
        if abs(raster.h - h) > 1e-9 * h:
            raise ValueError("cell sizes differ")
        di = (raster.xmin - target.xmin) / h
        dj = (raster.ymin - target.ymin) / h
        ci, cj = int(round(di)), int(round(dj))
        if abs(di - ci) > 1e-6 or abs(dj - cj) > 1e-6:
            raise ValueError("grids are not cell-aligned")
        if ci < 0 or cj < 0 or ci + raster.nx > target.nx or cj + raster.ny > target.ny:
            raise ValueError("raster does not fit in target")
        occ = np.zeros(target.occupancy.shape, dtype=bool)
        occ[cj:cj + raster.ny, ci:ci + raster.nx] = raster.occupancy
        return target.with_occupancy(occ)

    def union(self, a: RasterSet, b: RasterSet) -> RasterSet:
        """Union of two cell-aligned rasters on their common bounding grid."""
        h = a.h
        cells_x0 = min(a.xmin, b.xmin)
        cells_y0 = min(a.ymin, b.ymin)
        nx = int(round((max(a.xmax, b.xmax) - cells_x0) / h))
        ny = int(round((max(a.ymax, b.ymax) - cells_y0) / h))
        target = RasterSet(cells_x0, cells_x0 + nx * h, cells_y0, cells_y0 + ny * h,
                           np.zeros((ny, nx), dtype=bool))
        occ = self.embed(a, target).occupancy | self.embed(b, target).occupancy
        return target.with_occupancy(occ)

    def dilate(self, raster: RasterSet, eps: float) -> RasterSet:
        """Cells within euclidean distance eps of the occupied cells (exact distance transform).

        Args:
            raster: Set to dilate
            eps: Dilation radius, 0 or at least one cell width

        Returns:
            RasterSet: The dilation on a grid padded by ceil(eps/h) cells
        """
        if eps < 0:
            raise ValueError("eps must be non-negative")
        if raster.is_empty():
            raise ValueError("empty set")
        if eps == 0:
            return raster
        h = raster.h
        if eps < h * (1 - 1e-9):
            raise ValueError(f"eps={eps} is below the cell size {h}")
        radius_cells = eps / h
        padded = self.pad(raster, math.ceil(radius_cells - 1e-9))
        distance = ndimage.distance_transform_edt(~padded.occupancy)
        dilated = padded.occupancy | (distance < radius_cells - 1e-9)
        logging.debug(f"PlaneGeometryService.dilate: eps={eps} cells {raster.count} -> {int(dilated.sum())}")
        return padded.with_occupancy(dilated)

    def unbounded_component(self, raster: RasterSet) -> np.ndarray:
        """Mask of the complement component reached from the frame (8-connected)."""
        occ = raster.occupancy
        frame = np.concatenate([occ[0], occ[-1], occ[:, 0], occ[:, -1]])
        if frame.any():
            raise ValueError("set touches frame")
        return flood(~occ, (0, 0), connectivity=2)

    def boundary_of_unbounded_component(self, raster: RasterSet) -> RasterSet:
        """Occupied cells 8-adjacent to the unbounded complementary component.

        Args:
            raster: Set strictly inside its bounding box

        Returns:
            RasterSet: The outer boundary on the same grid
        """
        if raster.is_empty():
            raise ValueError("empty set")
        unbounded = self.unbounded_component(raster)
        touching = ndimage.binary_dilation(unbounded, structure=_EIGHT_NEIGHBOURS)
        return raster.with_occupancy(raster.occupancy & touching)

    def rasterize_polyline(self, points: np.ndarray, grid: RasterSet) -> np.ndarray:
        """Conservative 4-connected cell cover of a polyline on grid.

        Each segment is sampled at h/4; diagonal steps between consecutive cells
        also mark both side cells so the cover has no diagonal gaps.
        """
        pts = np.asarray(points, dtype=float)
        h = grid.h
        occ = np.zeros(grid.occupancy.shape, dtype=bool)
        for a, b in zip(pts[:-1], pts[1:]):
            steps = max(1, int(math.ceil(np.linalg.norm(b - a) / (0.25 * h))))
            s = np.linspace(0.0, 1.0, steps + 1)[:, None]
            samples = a + s * (b - a)
            col, row, valid = grid.cell_index(samples)
            if not valid.all():
                raise ValueError("polyline leaves the grid")
            occ[row, col] = True
            dc, dr = np.diff(col), np.diff(row)
            diagonal = (dc != 0) & (dr != 0)
            occ[row[:-1][diagonal], col[1:][diagonal]] = True
            occ[row[1:][diagonal], col[:-1][diagonal]] = True
        return occ

    def separates_origin(self, path: PathSample, resolution: int = 512) -> bool:
        """Whether the path's trace separates the origin from infinity.

        Args:
            path: Path whose polyline is rasterized
            resolution: Cells along the longer side of the covering grid

        Returns:
            bool: True iff a flood fill of the complement from the frame misses the origin's cell
        """
        pts = np.vstack([path.points, np.zeros((1, 2))])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        extent = float(max(hi - lo))
        if extent <= 0:
            raise ValueError("degenerate path")
        h = extent / resolution
        grid = RasterSet.node_aligned(lo[0], hi[0], lo[1], hi[1], h, margin_cells=3)
        occ = self.rasterize_polyline(path.points, grid)
        origin_col, origin_row = -grid.node_offset()[0], -grid.node_offset()[1]
        if occ[origin_row, origin_col]:
            raise ValueError("origin on path")
        reached = flood(~occ, (0, 0), connectivity=2)
        return not bool(reached[origin_row, origin_col])

    def winding_number(self, polygon: np.ndarray, point: Point2 = Point2(0.0, 0.0)) -> int:
        """Winding number of a closed polygon around point, by angle summation."""
        pts = np.asarray(polygon, dtype=float) - point.as_array()
        if not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        a, b = pts[:-1], pts[1:]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = (a * b).sum(axis=1)
        return int(round(np.arctan2(cross, dot).sum() / (2 * math.pi)))

    def sup_distance(self, a: PathSample, b: PathSample) -> float:
        """Sup-norm distance on the common time domain, over the union of both time grids."""
        scale = 1e-9 * max(1.0, abs(a.t_end), abs(b.t_end))
        if abs(a.t_start - b.t_start) > scale or abs(a.t_end - b.t_end) > scale:
            raise ValueError(
                f"paths have different time domains [{a.t_start}, {a.t_end}] and [{b.t_start}, {b.t_end}]"
            )
        times = np.union1d(a.times, b.times)
        times = times[(times >= max(a.t_start, b.t_start)) & (times <= min(a.t_end, b.t_end))]
        diff = a.value_at(times) - b.value_at(times)
        return float(np.max(np.hypot(diff[:, 0], diff[:, 1])))


def _distance_to_segment(points: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = q - p
    length_sq = float(d @ d)
    if length_sq == 0.0:
        return np.linalg.norm(points - p, axis=-1)
    s = np.clip(((points - p) @ d) / length_sq, 0.0, 1.0)
    return np.linalg.norm(points - (p + s[..., None] * d), axis=-1)
