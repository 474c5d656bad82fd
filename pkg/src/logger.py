"""
Logging setup shared by the laboratory modules and the CLI
"""
import functools
import logging
import logging.config
from pathlib import Path
import sys
import time

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import LOG_LEVEL, LOG_TO_FILE, LOGGING_CONFIG, LOGS_DIR

_configured = False


def _console_only(name: str) -> logging.Logger:
    root = logging.getLogger()
    root.setLevel(LOG_LEVEL)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s - %(name)s - %(message)s"))
        root.addHandler(handler)
    return logging.getLogger(name)


def setup_logger(name: str = __name__) -> logging.Logger:
    """
    Return the logger for `name`, configuring the root logger on first use.

    Args:
        name: Logger name (usually __name__ of the calling module)

    Returns:
        logging.Logger: Logger writing to the console, and to
            LOGS_DIR/roughsim.log when ROUGHSIM_LOG_TO_FILE is set
    """
    global _configured
    if _configured:
        return logging.getLogger(name)
    _configured = True

    try:
        if LOG_TO_FILE:
            LOGS_DIR.mkdir(exist_ok=True, parents=True)
        logging.config.dictConfig(LOGGING_CONFIG)
        return logging.getLogger(name)
    except (OSError, ValueError) as e:
        print(f"Warning: Could not set up file logging: {e}. Using console logging only.")
        return _console_only(name)


def log_function_call(logger: logging.Logger):
    """
    Log start, wall time and failure of a scenario-level call.

    Usage:
        @log_function_call(logger)
        def run(self, config):
            ...
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger.info(f"Calling {func.__qualname__}")
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.error(f"{func.__qualname__} failed with error: {str(e)}", exc_info=True)
                raise
            logger.info(f"{func.__qualname__} completed in {time.perf_counter() - start:.2f}s")
            return result
        return wrapper
    return decorator
