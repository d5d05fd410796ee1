"""Planar value types: points, rasterized sets and sampled paths."""
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Point2:
    """A point of the plane."""
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, xy: np.ndarray | tuple[float, float]) -> "Point2":
        return cls(float(xy[0]), float(xy[1]))

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True, eq=False)
class RasterSet:
    """A compact set or open domain as an occupancy grid over a bounding box.

    occupancy has shape (ny, nx); row j covers y in [ymin + j*h, ymin + (j+1)*h],
    column i covers x in [xmin + i*h, xmin + (i+1)*h].
    """
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        occ = np.array(self.occupancy, dtype=bool)
        if occ.ndim != 2:
            raise ValueError("occupancy must be a 2-D array")
        ny, nx = occ.shape
        if nx < 2 or ny < 2:
            raise ValueError(f"raster needs at least 2 cells per axis, got {nx}x{ny}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("bounding box must satisfy xmin<xmax and ymin<ymax")
        hx = (self.xmax - self.xmin) / nx
        hy = (self.ymax - self.ymin) / ny
        if abs(hx - hy) > 1e-9 * max(hx, hy):
            raise ValueError(f"cells must be square, got {hx} x {hy}")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def nx(self) -> int:
        return int(self.occupancy.shape[1])

    @property
    def ny(self) -> int:
        return int(self.occupancy.shape[0])

    @property
    def h(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return self.xmin, self.xmax, self.ymin, self.ymax

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def area(self) -> float:
        return self.count * self.h * self.h

    def is_empty(self) -> bool:
        return not bool(self.occupancy.any())

    # Centres are measured from the box midpoint so a symmetric odd grid has an exact 0 centre.
    def x_centers(self) -> np.ndarray:
        mid = 0.5 * (self.xmin + self.xmax)
        return mid + (np.arange(self.nx) - 0.5 * (self.nx - 1)) * self.h

    def y_centers(self) -> np.ndarray:
        mid = 0.5 * (self.ymin + self.ymax)
        return mid + (np.arange(self.ny) - 0.5 * (self.ny - 1)) * self.h

    def occupied_centers(self) -> np.ndarray:
        """Centres of occupied cells, shape (count, 2), in row-major cell order."""
        rows, cols = np.nonzero(self.occupancy)
        return np.column_stack([self.x_centers()[cols], self.y_centers()[rows]])

    def cell_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map points of shape (..., 2) to (col, row, inside_bbox)."""
        pts = np.asarray(points, dtype=float)
        col = np.floor((pts[..., 0] - self.xmin) / self.h).astype(np.int64)
        row = np.floor((pts[..., 1] - self.ymin) / self.h).astype(np.int64)
        valid = (col >= 0) & (col < self.nx) & (row >= 0) & (row < self.ny)
        return col, row, valid

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Occupancy lookup for points of shape (..., 2); points outside the box are not contained."""
        col, row, valid = self.cell_index(points)
        result = np.zeros(valid.shape, dtype=bool)
        result[valid] = self.occupancy[row[valid], col[valid]]
        return result

    def with_occupancy(self, occupancy: np.ndarray) -> "RasterSet":
        return RasterSet(self.xmin, self.xmax, self.ymin, self.ymax, occupancy)

    def same_grid(self, other: "RasterSet", tol: float = 1e-9) -> bool:
        scale = tol * max(self.h, other.h)
        return (
            self.occupancy.shape == other.occupancy.shape
            and all(abs(a - b) <= scale for a, b in zip(self.bbox, other.bbox))
        )

    def node_offset(self) -> tuple[int, int]:
        """Integer index of the first cell centre for node-aligned rasters (centres at k*h)."""
        return int(round(self.xmin / self.h + 0.5)), int(round(self.ymin / self.h + 0.5))

    @classmethod
    def node_aligned(
            cls, x0: float, x1: float, y0: float, y1: float, h: float, margin_cells: int = 2
    ) -> "RasterSet":
        """Empty raster covering [x0,x1]x[y0,y1] whose cell centres sit on integer multiples of h."""
        if h <= 0:
            raise ValueError("cell size must be positive")
        i0 = math.floor(x0 / h + 1e-9) - margin_cells
        i1 = math.ceil(x1 / h - 1e-9) + margin_cells
        j0 = math.floor(y0 / h + 1e-9) - margin_cells
        j1 = math.ceil(y1 / h - 1e-9) + margin_cells
        nx, ny = i1 - i0 + 1, j1 - j0 + 1
        occupancy = np.zeros((ny, nx), dtype=bool)
        return cls((i0 - 0.5) * h, (i1 + 0.5) * h, (j0 - 0.5) * h, (j1 + 0.5) * h, occupancy)


@dataclass(frozen=True, eq=False)
class PathSample:
    """A discretized continuous path: increasing times and planar points."""
    times: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        points = np.array(self.points, dtype=float).reshape(-1, 2)
        if times.ndim != 1 or len(times) != len(points):
            raise ValueError("times and points must have the same length")
        if len(times) < 2:
            raise ValueError("a path needs at least two samples")
        if not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(points))):
            raise ValueError("path samples must be finite")
        times.setflags(write=False)
        points.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def value_at(self, t: np.ndarray | float) -> np.ndarray:
        """Affine interpolation of the path at time(s) t, shape (..., 2)."""
        tt = np.asarray(t, dtype=float)
        x = np.interp(tt, self.times, self.points[:, 0])
        y = np.interp(tt, self.times, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def translated(self, offset: np.ndarray | tuple[float, float]) -> "PathSample":
        return PathSample(self.times, self.points + np.asarray(offset, dtype=float))
