"""Configuration management for the disparity refinement toolkit.

Handles loading and saving of refinement parameters, pipeline options and
camera rig settings. Configuration and logs are stored at:
~/.config/disprefine/ (config.json, disprefine.log), or under the directory
named by DISPREFINE_CONFIG_DIR.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any

from errors import ConfigError
from evalkit import CameraRig
from gdr import GdrParams
from ldr import LdrParams

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(os.environ.get("DISPREFINE_CONFIG_DIR") or Path.home() / ".config" / "disprefine")
CONFIG_FILE = CONFIG_DIR / "config.json"
DEFAULT_CONFIG_FILE = Path(__file__).with_name("default_config.json")

STAGES = ("ldr", "gdr", "full")
DISPARITY_SIGNS = ("as-stored", "negate")

# Checked-in defaults; every other layer merges over this file
DEFAULT_CONFIG = json.loads(DEFAULT_CONFIG_FILE.read_text())

# CLI flag (argparse dest) -> (section, key); section None means top level
FLAG_TARGETS = {
    "stage": (None, "stage"),
    "disparity_sign": (None, "disparity_sign"),
    "half_resolution": (None, "half_resolution"),
    "eval_full_res": (None, "eval_full_res"),
    "alpha_s": ("ldr", "alpha_s"),
    "alpha_p": ("ldr", "alpha_p"),
    "th_f": ("ldr", "th_f"),
    "th_s": ("ldr", "th_s"),
    "window": ("ldr", "window_w"),
    "specular_channel": ("ldr", "specular_channel"),
    "lam": ("gdr", "lambda"),
    "eps_huber": ("gdr", "eps_huber"),
    "warps": ("gdr", "m"),
    "levels": ("gdr", "n"),
    "inner_iters": ("gdr", "inner_iters"),
    "focal_px": ("rig", "focal_px"),
    "baseline_mm": ("rig", "baseline_mm"),
}


def merge_config(base: dict, update: dict) -> dict:
    """Merge ``update`` into a copy of ``base``, section by section."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read(path: Path) -> dict:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e.msg} (line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return data


def load_config(path: str | Path | None = None) -> dict:
    """Load configuration: defaults, then the user file, then ``path``.

    Args:
        path: Optional explicit JSON config file

    Returns:
        Dict containing the merged configuration
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if CONFIG_FILE.exists():
        config = merge_config(config, _read(CONFIG_FILE))
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        config = merge_config(config, _read(path))
    validate_config(config)
    return config


def save_config(config: dict, path: str | Path | None = None) -> Path:
    """Save configuration to ``path`` (default: the user config file)."""
    path = Path(path) if path is not None else CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(config, f, indent=2)
    return path


def apply_overrides(config: dict, overrides: dict[str, Any]) -> dict:
    """Apply flat CLI flag values through FLAG_TARGETS; None values are skipped."""
    config = copy.deepcopy(config)
    for flag, value in overrides.items():
        if value is None or flag not in FLAG_TARGETS:
            continue
        section, key = FLAG_TARGETS[flag]
        if section is None:
            config[key] = value
        else:
            config[section] = dict(config.get(section) or {})
            config[section][key] = value
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    if config.get("stage") not in STAGES:
        raise ConfigError(f"stage must be one of {STAGES}, got {config.get('stage')!r}")
    if config.get("disparity_sign") not in DISPARITY_SIGNS:
        raise ConfigError(
            f"disparity_sign must be one of {DISPARITY_SIGNS}, got {config.get('disparity_sign')!r}"
        )
    build_ldr_params(config)
    build_gdr_params(config)
    build_rig(config)


def build_ldr_params(config: dict) -> LdrParams:
    try:
        return LdrParams(**config.get("ldr", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid ldr section: {e}") from e


def build_gdr_params(config: dict) -> GdrParams:
    try:
        return GdrParams.from_dict(config.get("gdr", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid gdr section: {e}") from e


def build_rig(config: dict) -> CameraRig | None:
    rig = config.get("rig")
    if not rig:
        return None
    if rig.get("focal_px") is None or rig.get("baseline_mm") is None:
        raise ConfigError("rig needs both focal_px and baseline_mm")
    return CameraRig.from_dict(rig)


def get_thread_count() -> int:
    """Thread-count hint from DISPREFINE_THREADS (1 means serial)."""
    raw = os.environ.get("DISPREFINE_THREADS")
    if not raw:
        return 1
    try:
        count = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer DISPREFINE_THREADS={raw!r}")
        return 1
    if count < 1:
        logger.warning(f"Ignoring DISPREFINE_THREADS={count}; using 1")
        return 1
    return count
