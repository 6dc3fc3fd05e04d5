import logging
import os
from typing import Optional

from termcolor import colored

PACKAGE_LOGGER = "vqsim"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


class Logger:
    """
    Configures the ``vqsim`` package logger for one run: colored console output
    and, when a run directory is given, a ``Main.log`` file inside it.
    """

    def __init__(self, debug: bool = False, run_dir: Optional[str] = None) -> None:
        self.debug_enabled = debug
        self.run_dir = run_dir
        self._setup_directories()
        self._setup_logger()

    def _setup_directories(self) -> None:
        if self.run_dir:
            os.makedirs(self.run_dir, exist_ok=True)

    def _setup_logger(self) -> None:
        self.logger = logging.getLogger(PACKAGE_LOGGER)
        self.logger.setLevel(logging.DEBUG if self.debug_enabled else logging.INFO)

        # Prevent duplicate handlers if logger is re-initialized
        if self.logger.hasHandlers():
            for handler in list(self.logger.handlers):
                handler.close()
            self.logger.handlers.clear()

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(ColoredFormatter(LOG_FORMAT))
        self.logger.addHandler(console_handler)

        if self.run_dir:
            file_handler = logging.FileHandler(os.path.join(self.run_dir, "Main.log"), encoding="utf-8")
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            self.logger.addHandler(file_handler)

    def close(self) -> None:
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)

    def info(self, msg: str) -> None:
        self.logger.info(msg)

    def debug(self, msg: str) -> None:
        self.logger.debug(msg)

    def warning(self, msg: str) -> None:
        self.logger.warning(msg)

    def error(self, msg: str) -> None:
        self.logger.error(msg)


class ColoredFormatter(logging.Formatter):
    """
    A custom formatter to add colors to log messages.
    """

    COLORS = {
        "WARNING": "yellow",
        "INFO": "green",
        "DEBUG": "blue",
        "CRITICAL": "red",
        "ERROR": "red",
    }

    def format(self, record: logging.LogRecord) -> str:
        log_message = super().format(record)
        return colored(log_message, self.COLORS.get(record.levelname))
