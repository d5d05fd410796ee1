"""Configurations for thinlab"""
import os
import json
from typing import Any


def _load_local_settings() -> dict[str, Any]:
    """Machine-local THINLAB_* overrides (threads, batch size, iteration caps) from the "Values" object
    of thinlab.settings.json in the working directory; empty when the file is absent or unreadable."""
    try:
        settings_path = os.path.join(os.getcwd(), 'thinlab.settings.json')
        with open(settings_path) as f:
            return json.load(f).get("Values", {})
    except (FileNotFoundError, json.JSONDecodeError):
        return {}


_local_settings = _load_local_settings()


def _get_setting(var_name: str, required: bool = True, default: Any = None) -> Any:
    """Resolve one THINLAB_* knob.

    An exported variable wins over thinlab.settings.json, which wins over the default. A knob with
    no value anywhere raises ValueError when required and is None otherwise.
    """
    value = os.getenv(var_name)
    if value is None:
        value = _local_settings.get(var_name)

    if value is not None:
        return value

    if default is not None:
        return default

    if required:
        raise ValueError(f"Missing required setting: '{var_name}'")

    return None


def get_thread_count() -> int:
    """Worker threads for Monte Carlo batches, read at call time so tests can patch the env."""
    threads = int(_get_setting("THINLAB_THREADS", default=os.cpu_count() or 1))
    return max(1, threads)


THINLAB_BATCH_SIZE: int = int(_get_setting("THINLAB_BATCH_SIZE", default=4096))
THINLAB_LOG_LEVEL: str = _get_setting("THINLAB_LOG_LEVEL", default="INFO")

THINLAB_JULIA_MAX_ITER: int = int(_get_setting("THINLAB_JULIA_MAX_ITER", default=256))
THINLAB_EIGEN_MAX_ITER: int = int(_get_setting("THINLAB_EIGEN_MAX_ITER", default=500))
THINLAB_PSI_MARGIN: float = float(_get_setting("THINLAB_PSI_MARGIN", default=0.05))
