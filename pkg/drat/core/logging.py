import logging
import sys

from pythonjsonlogger import jsonlogger

from drat.core.config import Settings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

_configured = False


def setup_logging(settings: Settings, *, force: bool = False) -> None:
    """Configure the root logger once: stderr stream plus an optional log file."""
    global _configured
    if _configured and not force:
        return

    if settings.log_format == "json":
        formatter: logging.Formatter = jsonlogger.JsonFormatter(JSON_FORMAT)
    else:
        formatter = logging.Formatter(TEXT_FORMAT)

    # stdout is reserved for command results
    handlers = [logging.StreamHandler(sys.stderr)]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(getattr(logging, settings.log_level, logging.INFO))
    _configured = True
