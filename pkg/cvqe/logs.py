import sys
from typing import Optional, TextIO

from loguru import logger


def setup_logging(level: str = "INFO", log_file: Optional[str] = None, stream: TextIO = sys.stdout) -> None:
    """Install the console sink (and an optional rotating file sink)."""
    logger.remove()
    logger.add(
        stream,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=level
    )
    if log_file:
        logger.add(
            log_file,
            rotation="100 MB",
            retention="30 days",
            level=level
        )
