"""thinlab command-line runner"""
import argparse
import csv
import logging
import math
import os
import re
import sys
import tempfile
import time
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from thinlab.config import THINLAB_LOG_LEVEL
from thinlab.errors import ScenarioConfigError
from thinlab.models.run import RunSummary, Scenario, ScenarioConfig
from thinlab.repos.artifact_repo import ArtifactRepository
from thinlab.scenarios import (
    sc_julia_set,
    sc_eigen,
    sc_sojourn,
    sc_thinness,
    sc_fn_build,
    sc_p0,
    sc_cascade,
    sc_separation,
    sc_law_check
)
from thinlab.services.monitoring_service import MonitoringService
from thinlab.utils import atomic_write

RESERVED_KEYS = ("scenario", "seed", "output_dir")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

SCENARIOS: dict[str, Scenario] = {}


def register_scenario(scenario: Scenario) -> None:
    SCENARIOS[scenario.name] = scenario


register_scenario(sc_julia_set)
register_scenario(sc_eigen)
register_scenario(sc_sojourn)
register_scenario(sc_thinness)
register_scenario(sc_fn_build)
register_scenario(sc_p0)
register_scenario(sc_cascade)
register_scenario(sc_separation)
register_scenario(sc_law_check)


def parse_config_text(text: str, scenario: Scenario, seed: Optional[int] = None,
                      output_dir: Optional[str] = None) -> ScenarioConfig:
    """Parse a flat key=value scenario file over the scenario's defaults.

    Blank lines and '#' comments are ignored. scenario, seed and output_dir are reserved;
    every other key must be one the scenario declares.

    Args:
        text: File contents
        scenario: Registered scenario
        seed: Command-line seed (overrides the file)
        output_dir: Command-line output directory (overrides the file)

    Returns:
        ScenarioConfig: Resolved configuration

    Raises:
        ScenarioConfigError: On a malformed line or an unknown key, with its line number
    """
    values = dict(scenario.defaults)
    file_seed: Optional[int] = None
    file_output: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioConfigError(f"expected key=value, got '{line}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY.fullmatch(key):
            raise ScenarioConfigError(f"malformed key '{key}'", number)
        if key == "scenario":
            if value != scenario.name:
                raise ScenarioConfigError(f"file is for scenario '{value}', not '{scenario.name}'", number)
        elif key == "seed":
            try:
                file_seed = int(value)
            except ValueError:
                raise ScenarioConfigError(f"seed must be an integer, got '{value}'", number)
        elif key == "output_dir":
            file_output = value
        elif key not in scenario.defaults:
            raise ScenarioConfigError(f"unknown key '{key}' for scenario '{scenario.name}'", number)
        else:
            values[key] = value
    resolved_seed = seed if seed is not None else (file_seed if file_seed is not None else 0)
    resolved_output = output_dir or file_output or os.path.join("runs", scenario.name)
    return ScenarioConfig(scenario=scenario.name, seed=resolved_seed, output_dir=resolved_output, values=values)


def load_config(path: Optional[str], scenario: Scenario, seed: Optional[int] = None,
                output_dir: Optional[str] = None) -> ScenarioConfig:
    if path is None:
        return parse_config_text("", scenario, seed, output_dir)
    with open(path) as f:
        return parse_config_text(f.read(), scenario, seed, output_dir)


def run_scenario(scenario: Scenario, config: ScenarioConfig) -> RunSummary:
    """Run one scenario, write its artifacts and summary under config.output_dir.

    Args:
        scenario: Registered scenario
        config: Resolved configuration

    Returns:
        RunSummary: The summary that was written
    """
    monitor = MonitoringService()
    repo = ArtifactRepository(config.output_dir)
    monitor.start_run(config)
    started = time.perf_counter()
    scenario.runner(config, monitor, repo)
    for name in repo.artifacts:
        monitor.record_artifact(name)
    summary = monitor.complete_run(time.perf_counter() - started)
    repo.save_summary(summary)
    return summary


def first_difference(expected_path: str, actual_path: str) -> Optional[str]:
    """None when the files are byte-identical, else a description of the first difference."""
    with open(expected_path, "rb") as f:
        expected = f.read()
    with open(actual_path, "rb") as f:
        actual = f.read()
    if expected == actual:
        return None
    if expected_path.endswith(".csv"):
        expected_rows = list(csv.reader(expected.decode().splitlines()))
        actual_rows = list(csv.reader(actual.decode().splitlines()))
        header = expected_rows[0] if expected_rows else []
        for r, (old, new) in enumerate(zip(expected_rows, actual_rows)):
            for c in range(max(len(old), len(new))):
                a = old[c] if c < len(old) else "<missing>"
                b = new[c] if c < len(new) else "<missing>"
                if a != b:
                    column = header[c] if c < len(header) else str(c)
                    return f"row {r} column '{column}': expected {a}, got {b}"
        return f"row count differs: expected {len(expected_rows)}, got {len(actual_rows)}"
    offset = next((i for i, (a, b) in enumerate(zip(expected, actual)) if a != b), min(len(expected), len(actual)))
    return f"bytes differ from offset {offset}"


def replay(summary_path: str) -> int:
    """Rerun a finished run into a scratch directory and compare every artifact byte-wise.

    Returns:
        int: 0 when identical, 1 on the first mismatch, 2 when an artifact or the scenario is missing
    """
    run_dir = os.path.dirname(os.path.abspath(summary_path))
    original = ArtifactRepository(run_dir).load_summary(summary_path)
    missing = [name for name in original.artifacts if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        logging.error(f"replay: missing artifact(s): {', '.join(missing)}")
        return 2
    scenario = SCENARIOS.get(original.scenario)
    if scenario is None:
        raise ScenarioConfigError(f"unknown scenario '{original.scenario}'")
    values = {k: str(v) for k, v in original.config.items() if k not in RESERVED_KEYS}
    unknown = sorted(set(values) - set(scenario.defaults))
    if unknown:
        raise ScenarioConfigError(f"unknown key(s) {unknown} in summary config")
    with tempfile.TemporaryDirectory(prefix="thinlab-replay-") as scratch:
        config = ScenarioConfig(scenario=scenario.name, seed=original.seed, output_dir=scratch,
                                values={**scenario.defaults, **values})
        rerun = run_scenario(scenario, config)
        for name in original.artifacts:
            rerun_path = os.path.join(scratch, name)
            if not os.path.exists(rerun_path):
                logging.error(f"replay: rerun did not produce {name}")
                return 1
            difference = first_difference(os.path.join(run_dir, name), rerun_path)
            if difference is not None:
                logging.error(f"replay: {name}: {difference}")
                return 1
        extra = sorted(set(rerun.artifacts) - set(original.artifacts))
        if extra:
            logging.error(f"replay: rerun produced unexpected artifact(s): {', '.join(extra)}")
            return 1
    logging.info(f"replay: {len(original.artifacts)} artifacts identical for {summary_path}")
    return 0


def render(raster_path: str, overlay_paths: Sequence[str], output: Optional[str] = None) -> str:
    """Draw a raster set with raster (.pgm) and path (.csv) overlays to a PNG.

    Raster overlays must share the base raster's grid; paths are clipped to its box.

    Returns:
        str: Path of the written image
    """
    repo = ArtifactRepository(os.path.dirname(os.path.abspath(raster_path)))
    base = repo.load_raster(raster_path)
    scale = max(1, math.ceil(512 / max(base.nx, base.ny)))
    rgb = np.full((base.ny, base.nx, 3), 255, dtype=np.uint8)
    rgb[base.occupancy] = (90, 90, 90)
    paths = []
    for overlay_path in overlay_paths:
        if overlay_path.endswith(".pgm"):
            overlay = repo.load_raster(overlay_path)
            if not overlay.same_grid(base) or overlay.occupancy.shape != base.occupancy.shape:
                raise ValueError(f"bbox mismatch: {overlay_path} {overlay.bbox} vs {raster_path} {base.bbox}")
            rgb[overlay.occupancy] = (70, 110, 220)
        elif overlay_path.endswith(".csv"):
            paths.append(repo.load_path(overlay_path))
        else:
            raise ValueError(f"unsupported overlay '{overlay_path}'")
    image = Image.fromarray(rgb[::-1]).resize((base.nx * scale, base.ny * scale), Image.Resampling.NEAREST)
    draw = ImageDraw.Draw(image)
    for path in paths:
        px = (path.points[:, 0] - base.xmin) / base.h * scale
        py = (base.ymax - path.points[:, 1]) / base.h * scale
        draw.line(list(zip(px.tolist(), py.tolist())), fill=(200, 30, 30), width=max(1, scale // 2))
    target = output or os.path.splitext(raster_path)[0] + "_render.png"
    with atomic_write(target, "wb") as fh:
        image.save(fh, format="PNG")
    logging.info(f"render: wrote {target} ({len(overlay_paths)} overlays)")
    return target


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinlab", description="Thin-set and Brownian-path experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, scenario in SCENARIOS.items():
        sub = commands.add_parser(name, help=scenario.description)
        sub.add_argument("--config", help="flat key=value scenario file")
        sub.add_argument("--seed", type=int, help="overrides the seed in the file")
        sub.add_argument("--out", help="output directory")
    replay_parser = commands.add_parser("replay", help="rerun a summary and compare artifacts byte-wise")
    replay_parser.add_argument("summary")
    render_parser = commands.add_parser("render", help="draw a raster with overlays")
    render_parser.add_argument("raster")
    render_parser.add_argument("overlays", nargs="*")
    render_parser.add_argument("--output")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the thinlab console script.

    Returns:
        int: 0 pass, 1 assertion failure or mismatch, 2 usage or configuration error
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=THINLAB_LOG_LEVEL, format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "replay":
            return replay(args.summary)
        if args.command == "render":
            try:
                render(args.raster, args.overlays, args.output)
            except ValueError as e:
                logging.error(f"render: {e}")
                return 2
            return 0
        scenario = SCENARIOS[args.command]
        config = load_config(args.config, scenario, args.seed, args.out)
        summary = run_scenario(scenario, config)
        for failed in summary.failed_assertions():
            logging.error(f"Assertion failed: {failed.name} value={failed.value} ({failed.detail})")
        return summary.exit_status
    except (ScenarioConfigError, FileNotFoundError) as e:
        logging.error(f"thinlab {args.command}: {e}")
        return 2
    except Exception as e:
        logging.error(f"thinlab {args.command} failed: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
