"""
Helper functionality for interoperability with stdlib `logging`: console
records are routed through `StageMeter.write` so they never garble an
active progress line.
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager

from .progress import StageMeter


class MeterLoggingHandler(logging.StreamHandler):
    def __init__(self, meter_class: type[StageMeter] = StageMeter) -> None:
        super().__init__()
        self.meter_class = meter_class

    def emit(self, record: logging.LogRecord) -> None:
        try:
            msg = self.format(record)
            self.meter_class.write(msg, file=self.stream)
            self.flush()
        except (KeyboardInterrupt, SystemExit):
            raise
        except:  # noqa: E722  # pylint: disable=bare-except
            self.handleError(record)


def _is_console_logging_handler(handler: logging.Handler) -> bool:
    return isinstance(handler, logging.StreamHandler) and handler.stream in {
        sys.stdout,
        sys.stderr,
    }


def _get_first_found_console_logging_handler(
    handlers: list[logging.Handler],
) -> logging.StreamHandler | None:
    for handler in handlers:
        if _is_console_logging_handler(handler):
            return handler  # type: ignore[return-value]
    return None


@contextmanager
def logging_redirect_meter(
    loggers: list[logging.Logger] | None = None,
    meter_class: type[StageMeter] = StageMeter,
) -> Iterator[None]:
    """
    Context manager redirecting console logging to `StageMeter.write()`,
    leaving other handlers (e.g. log files) unaffected.

    Parameters
    ----------
    loggers  : list, optional
      Which loggers to redirect (default: [logging.root]).
    meter_class  : optional

    Example
    -------
    ```python
    with logging_redirect_meter():
        for m in StageMeter(seeds, desc="explore"):
            log.info("traced %s", m)
    ```
    """
    if loggers is None:
        loggers = [logging.root]
    original_handlers_list = [logger.handlers for logger in loggers]
    try:
        for logger in loggers:
            meter_handler = MeterLoggingHandler(meter_class)
            orig_handler = _get_first_found_console_logging_handler(logger.handlers)
            if orig_handler is not None:
                meter_handler.setFormatter(orig_handler.formatter)
                meter_handler.setLevel(orig_handler.level)
                meter_handler.stream = orig_handler.stream
                for f in orig_handler.filters:
                    meter_handler.addFilter(f)
            logger.handlers = [
                handler for handler in logger.handlers if not _is_console_logging_handler(handler)
            ] + [meter_handler]
        yield
    finally:
        for logger, original_handlers in zip(loggers, original_handlers_list):
            logger.handlers = original_handlers


def configure_logging(verbosity: int = 0) -> None:
    """
    Root console logging for the CLI: WARNING at -1, INFO at 0, DEBUG above.
    """
    level = logging.INFO
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity > 0:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
