"""Logging configuration for branchmc."""

import logging
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager

# Create logger
logger = logging.getLogger("branchmc")
logger.setLevel(logging.DEBUG)

# Console handler on stderr; stdout is reserved for results
console_handler = logging.StreamHandler(sys.stderr)
console_handler.setLevel(logging.INFO)

# Create formatter with timestamp
formatter = logging.Formatter(
    fmt="%(asctime)s.%(msecs)03d [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
console_handler.setFormatter(formatter)

# Add handler to logger
logger.addHandler(console_handler)

VERBOSITY_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


class CallbackLogHandler(logging.Handler):
    """Log handler that forwards formatted records to a callback."""

    def __init__(self, callback: Callable[[str], None]):
        super().__init__()
        self.callback = callback
        self.setFormatter(formatter)

    def emit(self, record: logging.LogRecord) -> None:
        try:
            msg = self.format(record)
            self.callback(msg)
        except Exception:
            pass


def add_callback_handler(
    callback: Callable[[str], None], level: int = logging.DEBUG
) -> CallbackLogHandler:
    """Add a handler that sends log messages to the given callback."""
    handler = CallbackLogHandler(callback)
    handler.setLevel(level)
    logger.addHandler(handler)
    return handler


def remove_callback_handler(handler: CallbackLogHandler) -> None:
    """Remove a callback handler."""
    logger.removeHandler(handler)


@contextmanager
def capture_warnings() -> Iterator[list[str]]:
    """Collect WARNING-and-above messages emitted inside the block."""
    captured: list[str] = []
    handler = add_callback_handler(captured.append, level=logging.WARNING)
    try:
        yield captured
    finally:
        remove_callback_handler(handler)


def set_verbosity(level: str | int) -> None:
    """Set the console handler level ("debug", "info", "warning", "error" or an int)."""
    if isinstance(level, str):
        try:
            level = VERBOSITY_LEVELS[level.lower()]
        except KeyError:
            raise ValueError(f"Unknown verbosity: {level!r}") from None
    console_handler.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    """Get a child logger with the given name."""
    return logger.getChild(name)
