"""
Structured logging configuration for push-vhgp.
Logs go to stderr so command output on stdout stays machine-readable.
"""

import logging
import sys
from typing import Optional

import structlog
from pythonjsonlogger import jsonlogger

from .settings import settings


def configure_logging() -> None:
    """Configure structured logging for the application."""

    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if settings.uses_console_logs
        else structlog.processors.JSONRenderer()
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    formatter = jsonlogger.JsonFormatter(
        '%(asctime)s %(name)s %(levelname)s %(message)s'
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)

    log_level = getattr(logging, settings.log_level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers = [handler]

    # Reduce noise from external libraries
    logging.getLogger("asyncio").setLevel(logging.WARNING)


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


class LoggerMixin:
    """Mixin class to add logging capabilities to any class."""

    @property
    def logger(self) -> structlog.stdlib.BoundLogger:
        """Get logger instance for this class."""
        return get_logger(self.__class__.__name__)


def log_fit_completed(
    model_kind: str,
    output: str,
    n_samples: int,
    objective: float,
    iterations: int,
    converged: bool,
    elapsed_ms: int,
    error: Optional[str] = None,
    **kwargs
) -> None:
    """Log the result of a model fit in a structured format."""
    logger = get_logger("model_fits")

    log_data = {
        "model_kind": model_kind,
        "output": output,
        "n_samples": n_samples,
        "objective": objective,
        "iterations": iterations,
        "converged": converged,
        "elapsed_ms": elapsed_ms,
        "error": error,
        **kwargs
    }

    if error:
        logger.error("Model fit failed", **log_data)
    elif not converged:
        logger.warning("Model fit stopped before convergence", **log_data)
    else:
        logger.info("Model fit completed", **log_data)


def log_experiment_cell(
    command: str,
    cell: str,
    elapsed_ms: int,
    error: Optional[str] = None,
    **kwargs
) -> None:
    """Log one experiment cell (learning-curve point, bracket, grid chunk)."""
    logger = get_logger("experiments")

    log_data = {
        "command": command,
        "cell": cell,
        "elapsed_ms": elapsed_ms,
        "error": error,
        **kwargs
    }

    if error:
        logger.error("Experiment cell failed", **log_data)
    else:
        logger.info("Experiment cell completed", **log_data)


def log_dataset_event(
    action: str,
    path: str,
    n_samples: int,
    error: Optional[str] = None,
    **kwargs
) -> None:
    """Log dataset ingestion and export."""
    logger = get_logger("datasets")

    log_data = {
        "action": action,
        "path": path,
        "n_samples": n_samples,
        "error": error,
        **kwargs
    }

    if error:
        logger.error("Dataset operation failed", **log_data)
    else:
        logger.info("Dataset operation completed", **log_data)


# Initialize logging when module is imported
configure_logging()
