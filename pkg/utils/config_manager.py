import json
import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv

from utils import logger

logger = logger.AppLogger(name="ConfigManager").get_logger()

ROOT_DIR = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = ROOT_DIR / "config.json"

TOLERANCE_ENV = "COARSEKIT_TOL"


def get_default_config() -> dict:
    """
    Returns the default configuration for the toolkit.
    """
    return {
        "tolerance": 1e-9,
        "rho_min": 0.1,
        "splice_ratio": 2.0,
        "splice_base_scale": 1.0,
        "sphere_strategy": "nearest",
        "default_seed": 0,
        "max_workers": 4,
        "pair_block_rows": 256,
        "transport_samples": 1000,
    }


def load_config(path: Optional[Union[str, Path]] = None) -> dict:
    """Load configuration from JSON, merged over the defaults."""
    config = get_default_config()
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        with open(config_path, "r") as f:
            config.update(json.load(f))
    except FileNotFoundError:
        if path is not None:
            logger.warning(f"Config file {config_path} not found, using defaults")
    except json.JSONDecodeError as e:
        logger.error(f"Failed to parse config {config_path}: {e}")
    return apply_env_overrides(config)


def apply_env_overrides(config: dict) -> dict:
    load_dotenv()
    raw = os.getenv(TOLERANCE_ENV)
    if raw:
        try:
            config["tolerance"] = float(raw)
        except ValueError:
            logger.warning(f"Ignoring {TOLERANCE_ENV}={raw!r}: not a number")
    return config
