"""
Logging configuration and utilities for training and evaluation runs.
"""
import sys
from typing import Any, Dict, Optional

from loguru import logger

from config.settings import settings


class RunLogger:
    """Thin loguru wrapper with helpers for pipeline events."""

    def __init__(self):
        self._setup_logger()

    def _setup_logger(self):
        """Configure the logger with appropriate settings."""
        # Remove default handler
        logger.remove()

        logger.add(
            sys.stderr,
            format=self._get_console_format(),
            level=settings.logging.level,
            colorize=settings.logging.format != "json",
            backtrace=True,
            diagnose=False,
        )

        if settings.logging.file:
            logger.add(
                settings.logging.file,
                format=self._get_file_format(),
                level=settings.logging.level,
                rotation=settings.logging.rotation,
                retention=settings.logging.retention,
                serialize=settings.logging.format == "json",
                backtrace=True,
                diagnose=False,
            )

    def _get_console_format(self) -> str:
        """Get console log format."""
        if settings.logging.format == "json":
            return "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}"
        return "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | <level>{message}</level>"

    def _get_file_format(self) -> str:
        """Get file log format."""
        return "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} | {message}"

    def reconfigure(self):
        """Re-apply sinks after settings changed (e.g. --verbose)."""
        self._setup_logger()

    def info(self, message: str, **kwargs):
        logger.opt(depth=1).info(message, **kwargs)

    def debug(self, message: str, **kwargs):
        logger.opt(depth=1).debug(message, **kwargs)

    def warning(self, message: str, **kwargs):
        logger.opt(depth=1).warning(message, **kwargs)

    def error(self, message: str, **kwargs):
        logger.opt(depth=1).error(message, **kwargs)

    def step(self, step_description: str):
        """Log a pipeline step."""
        logger.opt(depth=1).info(f"📋 Step: {step_description}")

    def epoch_end(self, epoch: int, train_total: float, dev_total: Optional[float]):
        """Log the end of a training epoch."""
        dev_str = f", dev={dev_total:.6f}" if dev_total is not None else ""
        logger.opt(depth=1).info(f"Epoch {epoch}: train={train_total:.6f}{dev_str}")

    def artifact_written(self, kind: str, path: Any):
        """Log an output artifact."""
        logger.opt(depth=1).info(f"💾 {kind} written: {path}")

    def metrics(self, flat_report: Dict[str, float]):
        """Log a flattened metrics report, one key per line at DEBUG."""
        for key in sorted(flat_report):
            logger.opt(depth=1).debug(f"{key} = {flat_report[key]:.4f}")


# Global logger instance
run_logger = RunLogger()


def get_logger(name: str = __name__) -> RunLogger:
    """Get logger instance for compatibility."""
    return run_logger
