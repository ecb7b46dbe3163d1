"""Utility modules for branchmc."""

from branchmc.utils.logger import (
    CallbackLogHandler,
    add_callback_handler,
    capture_warnings,
    get_logger,
    remove_callback_handler,
    set_verbosity,
)
from branchmc.utils.streams import SampleStreams, derive_seed, gaussians, substream

__all__ = [
    "get_logger",
    "set_verbosity",
    "add_callback_handler",
    "remove_callback_handler",
    "capture_warnings",
    "CallbackLogHandler",
    "SampleStreams",
    "derive_seed",
    "gaussians",
    "substream",
]
