"""
Logging utilities for grid-dispatch

Provides centralized logging configuration and utilities.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger as loguru_logger


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance for the given name"""
    return logging.getLogger(name)


class InterceptHandler(logging.Handler):
    """Forward standard logging records to loguru"""

    def emit(self, record):
        try:
            level = loguru_logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        loguru_logger.opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """Setup logging configuration"""
    loguru_logger.remove()

    # stderr keeps stdout free for CSV/table output of the CLI
    loguru_logger.add(
        sys.stderr,
        level=log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        colorize=True
    )

    if log_file:
        log_file_path = Path(log_file)
        log_file_path.parent.mkdir(parents=True, exist_ok=True)

        loguru_logger.add(
            log_file,
            level=log_level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            rotation="10 MB",
            retention="7 days",
            compression="zip"
        )

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)

    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)

    return loguru_logger


def log_solver_event(kind: str,
                     status: str,
                     wall_time: Optional[float] = None,
                     detail: Optional[Dict[str, Any]] = None):
    """Log a solver event"""
    logger = get_logger("solver_events")

    message = f"SOLVER_EVENT: {kind} | Status: {status}"
    if wall_time is not None:
        message += f" | WallTime: {wall_time:.4f}s"
    if detail:
        message += f" | Details: {detail}"

    logger.info(message)


def log_training_event(episode: int,
                       metrics: Dict[str, Any],
                       mode: Optional[str] = None):
    """Log a training progress event"""
    logger = get_logger("training_events")

    message = f"TRAINING_EVENT: episode {episode}"
    if mode:
        message += f" | Mode: {mode}"
    for key, value in metrics.items():
        if isinstance(value, float):
            message += f" | {key}: {value:.4f}"
        else:
            message += f" | {key}: {value}"

    logger.info(message)
