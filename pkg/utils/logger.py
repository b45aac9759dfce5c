"""Structured logging for riskbench."""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional


class _JsonLineFormatter(logging.Formatter):
    """Emit the message unchanged when it already is a JSON object, else wrap it."""

    def format(self, record: logging.LogRecord) -> str:
        message = record.getMessage()
        if message.startswith("{"):
            return message
        return json.dumps({
            "level": record.levelname,
            "logger": record.name,
            "message": message,
        })


class RiskLogger:
    """Structured logger for pipeline operations."""

    _logger: Optional[logging.Logger] = None
    _initialized = False
    _json_mode = False

    @classmethod
    def _initialize(cls):
        """Initialize logger if not already done."""
        if cls._initialized:
            return

        cls._logger = logging.getLogger("riskbench")
        cls._logger.setLevel(logging.DEBUG)
        cls._logger.propagate = False

        # Prevent duplicate handlers
        if not cls._logger.handlers:
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setLevel(os.getenv("RISKBENCH_LOG_LEVEL", "INFO").upper())
            console_handler.setFormatter(cls._console_formatter())
            cls._logger.addHandler(console_handler)

        cls._initialized = True

    @classmethod
    def _console_formatter(cls) -> logging.Formatter:
        if cls._json_mode:
            return _JsonLineFormatter()
        return logging.Formatter(
            "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )

    @classmethod
    def configure(cls, json_mode: bool = False, log_dir: Optional[Path] = None):
        """Switch console format and optionally attach a detailed file log.

        Args:
            json_mode: Emit bare JSON lines on the console (for CI)
            log_dir: Directory receiving riskbench.log
        """
        cls._initialize()
        cls._json_mode = json_mode
        for handler in cls._logger.handlers:
            if isinstance(handler, logging.FileHandler):
                continue
            handler.setFormatter(cls._console_formatter())

        if log_dir is not None:
            log_dir = Path(log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            target = (log_dir / "riskbench.log").resolve()
            for handler in list(cls._logger.handlers):
                if isinstance(handler, logging.FileHandler):
                    cls._logger.removeHandler(handler)
                    handler.close()
            file_handler = logging.FileHandler(target, mode="a", encoding="utf-8")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                "%(asctime)s [%(levelname)s] %(name)s [%(filename)s:%(lineno)d] %(funcName)s: %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S"
            ))
            cls._logger.addHandler(file_handler)

    @classmethod
    def get_logger(cls) -> logging.Logger:
        """Get the logger instance."""
        cls._initialize()
        return cls._logger

    @classmethod
    def log_operation(
        cls,
        operation: str,
        status: str,
        details: Optional[dict] = None,
        error: Optional[Exception] = None
    ):
        """Log a pipeline operation with structured data.

        Args:
            operation: Operation name (e.g., "build_matrix")
            status: Status (success, error, warning)
            details: Additional details dict
            error: Exception if any
        """
        logger = cls.get_logger()

        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "operation": operation,
            "status": status,
        }

        if details:
            log_data.update(details)

        if error:
            log_data["error"] = {
                "type": type(error).__name__,
                "message": str(error),
            }
            logger.error(json.dumps(log_data, default=str))
        elif status == "warning":
            logger.warning(json.dumps(log_data, default=str))
        else:
            logger.info(json.dumps(log_data, default=str))

    @classmethod
    def log_performance(
        cls,
        operation: str,
        duration_ms: float,
        metadata: Optional[dict] = None
    ):
        """Log performance metrics.

        Args:
            operation: Operation name
            duration_ms: Duration in milliseconds
            metadata: Additional metadata
        """
        logger = cls.get_logger()

        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "operation": operation,
            "duration_ms": round(duration_ms, 2),
            "type": "performance"
        }

        if metadata:
            log_data.update(metadata)

        logger.debug(json.dumps(log_data, default=str))

        # Warn on slow operations
        if duration_ms > 1000:
            logger.warning(f"Slow operation: {operation} took {duration_ms:.0f}ms")


def get_logger() -> logging.Logger:
    """Get the riskbench logger."""
    return RiskLogger.get_logger()


def warn(operation: str, message: str, **details):
    """Shorthand for a warning-level operation record."""
    RiskLogger.log_operation(operation, "warning", {"message": message, **details})
