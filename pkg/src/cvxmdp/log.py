import logging
import logging.config
import os
from pathlib import Path

LOGGER_NAME = "cvxmdp_logger"

_console = False


def setup_logging(
    log_dir: str = "logs", log_file: str = "cvxmdp.log", console: bool | None = None
) -> logging.Logger:
    """
    Configure logging for the experiment runner.

    Args:
        log_dir: Directory to store log files
        log_file: Name of the log file
        console: Also echo records to stderr; None keeps the previous choice

    Returns:
        The package logger
    """
    global _console
    if console is not None:
        _console = console

    # Create logs directory if it doesn't exist
    Path(log_dir).mkdir(parents=True, exist_ok=True)

    log_path = os.path.join(log_dir, log_file)

    handlers = ["file_handler"] + (["console_handler"] if _console else [])

    LOGGING_CONFIG = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
        },
        "handlers": {
            "file_handler": {
                "class": "logging.FileHandler",
                "filename": log_path,
                "mode": "a",  # append mode
                "formatter": "standard",
                "encoding": "utf-8",
            },
            "console_handler": {
                "class": "logging.StreamHandler",
                "formatter": "standard",
                "stream": "ext://sys.stderr",
            },
        },
        "loggers": {
            LOGGER_NAME: {
                "handlers": handlers,
                "level": "INFO",
                "propagate": False,
            }
        },
    }

    logging.config.dictConfig(LOGGING_CONFIG)
    logger = logging.getLogger(LOGGER_NAME)

    # Add a separation line at the start of each run
    logger.info("=" * 80)
    logger.info("New run started")
    return logger


def get_logger() -> logging.Logger:
    """Package logger without touching the handler configuration."""
    return logging.getLogger(LOGGER_NAME)
