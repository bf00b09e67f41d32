import logging
import sys
import time
from typing import Sequence
from app.core.config import get_settings

def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    if not logger.handlers:
        # stdout is reserved for the CLI's one-line JSON status
        handler = logging.StreamHandler(sys.stderr)
        fmt = logging.Formatter('%(asctime)s | %(levelname)s | %(name)s | %(message)s')
        handler.setFormatter(fmt)
        logger.addHandler(handler)
        logger.setLevel(getattr(logging, get_settings().LOG_LEVEL.upper(), logging.INFO))
        logger.propagate = False
    return logger

def residual_trail(residuals: Sequence[float], keep: int = 4) -> str:
    """Compact rendering of an iteration history: first value, then the last few."""
    if not residuals:
        return "[]"
    vals = [f"{r:.2e}" for r in residuals]
    if len(vals) > keep + 1:
        vals = vals[:1] + ["..."] + vals[-keep:]
    return "[" + ", ".join(vals) + "]"

class timeblock:
    def __init__(self, logger: logging.Logger, msg: str, level: int = logging.INFO):
        self.logger = logger
        self.msg = msg
        self.level = level
        self.elapsed_ms = 0.0
    def __enter__(self):
        self.start = time.perf_counter()
        return self
    def __exit__(self, exc_type, exc, tb):
        self.elapsed_ms = (time.perf_counter() - self.start)*1000
        status = "failed after" if exc_type else "took"
        self.logger.log(self.level, f"{self.msg} {status} {self.elapsed_ms:.1f} ms")
