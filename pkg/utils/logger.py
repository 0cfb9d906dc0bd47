import logging
import os
import sys

from colorama import Fore, Style, init
from dotenv import load_dotenv

init(autoreset=True)  # Reset colors automatically after each print
load_dotenv()

LEVEL_COLORS = {
    logging.DEBUG: Fore.CYAN,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.MAGENTA,
}


def resolve_level(default: int = logging.INFO) -> int:
    """Level from COARSEKIT_LOG_LEVEL (name or number), falling back to default."""
    raw = os.getenv("COARSEKIT_LOG_LEVEL")
    if not raw:
        return default
    if raw.isdigit():
        return int(raw)
    level = logging.getLevelName(raw.upper())
    return level if isinstance(level, int) else default


class ColorFormatter(logging.Formatter):
    def format(self, record):
        color = LEVEL_COLORS.get(record.levelno, "")
        msg = super().format(record)
        return f"{color}{msg}{Style.RESET_ALL}"


class AppLogger:
    # stdout carries only JSON reports
    def __init__(self, name: str = "CoarseKit", level: int = None):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(resolve_level() if level is None else level)

        if not self.logger.handlers:
            console_handler = logging.StreamHandler(sys.stderr)
            formatter = ColorFormatter(
                "[%(asctime)s] [%(levelname)s] [%(name)s] - %(message)s",
                "%Y-%m-%d %H:%M:%S",
            )
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)
            self.logger.propagate = False

    def get_logger(self):
        return self.logger
