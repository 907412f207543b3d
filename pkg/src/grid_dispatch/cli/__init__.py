"""
CLI Module

Run configuration, command group and plot output.
"""

from .commands import cli, main
from .config import RunConfig, config_hash, dump_config, load_config, parse_config

__all__ = [
    "cli",
    "main",
    "RunConfig",
    "config_hash",
    "dump_config",
    "load_config",
    "parse_config",
]
