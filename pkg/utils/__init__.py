"""Utility functions and configuration."""

from utils.config import get_env, load_config, load_run_config, RunConfig
from utils.logger import get_logger, RiskLogger
from utils.seeding import make_rng

__all__ = ["get_env", "load_config", "load_run_config", "RunConfig", "get_logger", "RiskLogger", "make_rng"]
