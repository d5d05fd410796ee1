"""Repository for run artifacts"""
import csv
import json
import logging
import os
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image

from thinlab.models.field import ScalarField
from thinlab.models.geometry import PathSample, RasterSet
from thinlab.models.run import RunSummary
from thinlab.utils import atomic_write


def format_value(value: Any) -> str:
    """Text form of a CSV cell; floats use repr so reruns are byte-identical."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


# noinspection PyMethodMayBeStatic
class ArtifactRepository:
    """Reads and writes rasters, paths, fields, tables and summaries under one output directory."""

    def __init__(self, root: str) -> None:
        self.root = root
        self.artifacts: list[str] = []

    def _target(self, name: str) -> str:
        path = os.path.join(self.root, name)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        return path

    def _track(self, name: str) -> None:
        if name not in self.artifacts:
            self.artifacts.append(name)

    def save_raster(self, name: str, raster: RasterSet) -> str:
        """Save a raster as binary PGM plus a JSON bounding-box sidecar.

        Args:
            name: File stem relative to the output directory
            raster: Raster to save

        Returns:
            str: Relative name of the PGM file
        """
        pgm_name, json_name = f"{name}.pgm", f"{name}.json"
        # top image row is the largest y
        pixels = np.where(raster.occupancy[::-1], 255, 0).astype(np.uint8)
        with atomic_write(self._target(pgm_name), "wb") as fh:
            Image.fromarray(pixels).save(fh, format="PPM")  # 2-D uint8 saves as P5
        sidecar = {"xmin": raster.xmin, "xmax": raster.xmax, "ymin": raster.ymin, "ymax": raster.ymax}
        with atomic_write(self._target(json_name)) as fh:
            json.dump(sidecar, fh, indent=2)
        self._track(pgm_name)
        self._track(json_name)
        logging.debug(f"ArtifactRepository.save_raster: {pgm_name} ({raster.nx}x{raster.ny})")
        return pgm_name

    def load_raster(self, pgm_path: str) -> RasterSet:
        """Load a raster from a PGM file and its JSON sidecar.

        Args:
            pgm_path: Path to the PGM file

        Returns:
            RasterSet: The raster
        """
        sidecar_path = os.path.splitext(pgm_path)[0] + ".json"
        with open(sidecar_path) as f:
            bbox = json.load(f)
        with Image.open(pgm_path) as image:
            pixels = np.asarray(image.convert("L"))
        occupancy = pixels[::-1] > 127
        return RasterSet(float(bbox["xmin"]), float(bbox["xmax"]), float(bbox["ymin"]),
                         float(bbox["ymax"]), occupancy)

    def save_path(self, name: str, path: PathSample) -> str:
        """Save a path as CSV with header t,x,y."""
        csv_name = f"{name}.csv"
        rows = ((t, p[0], p[1]) for t, p in zip(path.times, path.points))
        self.save_rows(csv_name, ("t", "x", "y"), rows)
        return csv_name

    def load_path(self, csv_path: str) -> PathSample:
        with open(csv_path, newline="") as f:
            reader = csv.DictReader(f)
            data = [(float(row["t"]), float(row["x"]), float(row["y"])) for row in reader]
        array = np.array(data, dtype=float).reshape(-1, 3)
        return PathSample(array[:, 0], array[:, 1:])

    def save_field(self, name: str, scalar_field: ScalarField) -> str:
        """Save a field as CSV (i,j,x,y,value) next to its domain raster."""
        domain = scalar_field.domain
        rows_idx, cols_idx = np.nonzero(domain.occupancy)
        xs, ys = domain.x_centers()[cols_idx], domain.y_centers()[rows_idx]
        rows = zip(cols_idx, rows_idx, xs, ys, scalar_field.values)
        csv_name = self.save_rows(f"{name}.csv", ("i", "j", "x", "y", "value"), rows)
        self.save_raster(f"{name}_domain", domain)
        return csv_name

    def save_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """Write a CSV table atomically.

        Args:
            name: File name relative to the output directory
            header: Column names
            rows: Row values, formatted with format_value

        Returns:
            str: Relative name of the CSV file
        """
        with atomic_write(self._target(name)) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        self._track(name)
        return name

    def save_json(self, name: str, data: dict[str, Any]) -> str:
        with atomic_write(self._target(name)) as fh:
            json.dump(data, fh, indent=2, allow_nan=False)
            fh.write("\n")
        self._track(name)
        return name

    def load_json(self, path: str) -> dict[str, Any]:
        with open(path) as f:
            return json.load(f)

    def save_summary(self, summary: RunSummary, name: str = "summary.json") -> str:
        """Write the run summary last; it is not listed among its own artifacts."""
        with atomic_write(self._target(name)) as fh:
            json.dump(summary.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")
        logging.info(f"ArtifactRepository.save_summary: wrote {os.path.join(self.root, name)}")
        return name

    def load_summary(self, path: str) -> RunSummary:
        return RunSummary.from_dict(self.load_json(path))
