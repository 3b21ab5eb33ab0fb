"""
Workbench Settings

Loads defaults from config.json at the project root, falls back to built-in
defaults when the file is missing, and applies ES_* environment overrides
(a local .env file is honoured through python-dotenv).
"""

import json
import logging
import logging.config
import os
from functools import lru_cache
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

# Configure logging
logger = logging.getLogger("ergodic_workbench.settings")

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..'))
CONFIG_DIR = os.path.join(PROJECT_ROOT, 'config')

DEFAULTS: Dict[str, Any] = {
    "digit_budget": 1_000_000,
    "delta_min": 1e-10,
    "norm_tolerance": 1e-9,
    "averages_cache_limit": 262_144,
    "window_cap": 100_000_000,
    "trace_cap": 4096,
    "probe_horizon": 10_000,
    "max_workers": 4,
    "kachurovskii_constant": 1.0,
    "output_dir": "results",
}


class Settings(BaseModel):
    """Immutable runtime settings."""
    model_config = ConfigDict(frozen=True, extra="ignore")

    digit_budget: int = Field(DEFAULTS["digit_budget"], ge=1)
    delta_min: float = Field(DEFAULTS["delta_min"], gt=0)
    norm_tolerance: float = Field(DEFAULTS["norm_tolerance"], gt=0)
    averages_cache_limit: int = Field(DEFAULTS["averages_cache_limit"], ge=16)
    window_cap: int = Field(DEFAULTS["window_cap"], ge=1)
    trace_cap: int = Field(DEFAULTS["trace_cap"], ge=1)
    probe_horizon: int = Field(DEFAULTS["probe_horizon"], ge=1)
    max_workers: int = Field(DEFAULTS["max_workers"], ge=1)
    kachurovskii_constant: float = Field(DEFAULTS["kachurovskii_constant"], gt=0)
    output_dir: str = DEFAULTS["output_dir"]


def _load_config_file(config_path: str) -> Dict[str, Any]:
    """Load the JSON defaults file, returning built-in defaults on any problem."""
    try:
        if os.path.exists(config_path):
            with open(config_path, 'r') as f:
                logger.debug(f"Loading workbench config from: {config_path}")
                data = json.load(f)
            if not isinstance(data, dict):
                logger.warning(f"Expected an object in {config_path}, got {type(data)}. Using defaults.")
                return dict(DEFAULTS)
            return {**DEFAULTS, **data}
        logger.warning(f"Config file {config_path} not found, using defaults.")
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading config from {config_path}: {e}")
    return dict(DEFAULTS)


def load_settings(config_path: Optional[str] = None, env: Optional[Dict[str, str]] = None) -> Settings:
    """
    Build a Settings object.

    Args:
        config_path: JSON defaults file (defaults to ES_CONFIG_PATH or <root>/config.json)
        env: Environment mapping to read overrides from (defaults to os.environ)

    Returns:
        The validated settings
    """
    if env is None:
        load_dotenv(os.path.join(PROJECT_ROOT, '.env'), override=False)
        env = dict(os.environ)
    path = config_path or env.get("ES_CONFIG_PATH") or os.path.join(PROJECT_ROOT, 'config.json')
    values = _load_config_file(path)

    overrides = {
        "ES_DIGIT_BUDGET": ("digit_budget", int),
        "ES_MAX_WORKERS": ("max_workers", int),
    }
    for var, (key, cast) in overrides.items():
        raw = env.get(var)
        if raw:
            try:
                values[key] = cast(raw)
                logger.info(f"{var} overrides {key} = {values[key]}")
            except ValueError:
                logger.warning(f"Ignoring {var}={raw!r}: not a valid {cast.__name__}")
    return Settings(**values)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Process-wide settings, loaded once."""
    return load_settings()


def configure_logging(level: Optional[str] = None) -> None:
    """Configure logging from config/logging_config.json, or basicConfig when absent."""
    log_config_path = os.path.join(CONFIG_DIR, 'logging_config.json')
    if os.path.exists(log_config_path):
        try:
            with open(log_config_path, 'r') as f:
                logging.config.dictConfig(json.load(f))
        except (OSError, ValueError) as e:
            logging.basicConfig(level=logging.INFO)
            logger.error(f"Bad logging config {log_config_path}: {e}")
    else:
        logging.basicConfig(level=logging.INFO)
    level = level or os.getenv("ES_LOG_LEVEL")
    if level:
        logging.getLogger().setLevel(level.upper())
