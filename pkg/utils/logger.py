"""Logging configuration for the backend."""
import logging
import sys
from datetime import datetime
from config import LOGS_DIR, LOG_LEVEL, LOG_TO_FILE


def setup_logger(name: str = "RmtBackend", level: int | str = LOG_LEVEL) -> logging.Logger:
    """Setup logger with console and file handlers.

    Console output goes to stderr so that reports written to stdout stay
    machine-readable.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    
    # Close and drop existing handlers if any
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
    logger.propagate = False
    
    # Log format
    formatter = logging.Formatter(
        '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    
    # Console handler
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    
    # File handler
    if LOG_TO_FILE:
        log_file = LOGS_DIR / f"{name.lower()}_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    
    return logger
