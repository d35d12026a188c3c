"""
Colored console logging with an in-memory record store.

.. code:: python

    logger, handler = setup_logging()
    logger.info("Placed 17 eigenvalues")
    handler.all_records  # every message, formatted, joined by line breaks
"""

import logging
import sys
import time
from logging.handlers import BufferingHandler
from typing import List, Optional, Tuple, Union

from termcolor import colored

LOGGER_NAME = "lgslam"

LOGFMT = "%(asctime)s_%(msecs)03d %(levelname)s %(message)s"
DATEFMT = "%Y%m%d_%H%M%S"

COLORS = {
    "CRITICAL": ("red", ["bold"]),
    "ERROR": ("red", []),
    "WARNING": ("yellow", []),
    "INFO": ("green", []),
    "DEBUG": ("white", []),
}


class Timer:
    """Measure the execution time of a command run."""

    def __init__(self):
        self.stop = 0.0
        """The time when the timer stops. (UNIX timestamp)"""

        self.start = time.time()
        """The start time. (UNIX timestamp)"""

        self.interval = 0.0
        """The time interval between start and stop."""

    def result(self) -> str:
        """
        Measure the time interval

        :return: A formatted string displaying the result.
        """
        self.stop = time.time()
        self.interval = self.stop - self.start
        return "{:.3f}s".format(self.interval)


class LoggingHandler(BufferingHandler):
    """Store all logging records in memory. Print all records on emit,
    errors to ``stderr`` and everything else to ``stdout``."""

    def __init__(self, quiet: bool = False):
        BufferingHandler.__init__(self, capacity=1000000)
        self.quiet = quiet

    @staticmethod
    def _print(record: logging.LogRecord):
        level = record.levelname
        color, attrs = COLORS.get(level, ("grey", []))
        if record.levelno >= logging.ERROR:
            stream = sys.stderr
        else:
            stream = sys.stdout

        created = "{}_{:03d}".format(
            time.strftime(DATEFMT, time.localtime(record.created)),
            int(record.msecs),
        )

        print(
            "{} {} {}".format(
                created,
                colored(" {:<8} ".format(level), color, attrs=["reverse"] + attrs),
                colored(record.getMessage(), color, attrs=attrs),
            ),
            file=stream,
        )

    def emit(self, record: logging.LogRecord):
        self.buffer.append(record)
        if not self.quiet:
            self._print(record)

    def shouldFlush(self, record: logging.LogRecord) -> bool:
        # Records are kept for the report of the whole command.
        return False

    @property
    def all_records(self) -> str:
        """All log messages joined by line breaks."""
        messages: List[str] = []
        for record in self.buffer:
            messages.append(self.format(record))
        return "\n".join(messages)


def setup_logging(
    level: Union[int, str] = logging.INFO, quiet: bool = False
) -> Tuple[logging.Logger, LoggingHandler]:
    """Attach a fresh :class:`LoggingHandler` to the package logger.

    Handlers of earlier calls are removed, so every command run starts with
    an empty record store.

    :param level: The threshold of the package logger.
    :param quiet: Only store the records, print nothing.
    """
    logger = logging.getLogger(LOGGER_NAME)
    for old in [h for h in logger.handlers if isinstance(h, LoggingHandler)]:
        logger.removeHandler(old)
    handler = LoggingHandler(quiet=quiet)
    handler.setFormatter(logging.Formatter(fmt=LOGFMT, datefmt=DATEFMT))
    logger.setLevel(level)
    logger.addHandler(handler)
    logger.propagate = False
    return logger, handler


def current_handler() -> Optional[LoggingHandler]:
    """The handler installed by the last :func:`setup_logging` call."""
    for handler in logging.getLogger(LOGGER_NAME).handlers:
        if isinstance(handler, LoggingHandler):
            return handler
    return None
