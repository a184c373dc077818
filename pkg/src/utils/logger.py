import logging
import os
from logging.handlers import RotatingFileHandler

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
MEGABYTE = 2 ** 20


def _rotating(path: str, level: int, backups: int) -> RotatingFileHandler:
    handler = RotatingFileHandler(path, maxBytes=10 * MEGABYTE, backupCount=backups)
    handler.setLevel(level)
    return handler


def setup_logging(log_level=logging.INFO, log_dir: str = 'logs') -> logging.Logger:
    """Configure the root logger for one toolkit run.

    Console output goes to stderr so stdout carries only command results.
    The run log and the error log rotate at 10 MB.
    """
    if isinstance(log_level, str):
        log_level = getattr(logging, log_level.upper(), logging.INFO)
    os.makedirs(log_dir, exist_ok=True)

    root = logging.getLogger()
    root.setLevel(log_level)
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    handlers = [
        logging.StreamHandler(),
        _rotating(os.path.join(log_dir, 'free_energy.log'), log_level, backups=5),
        _rotating(os.path.join(log_dir, 'errors.log'), logging.ERROR, backups=3),
    ]
    handlers[0].setLevel(log_level)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)

    # scipy and numpy stay quiet below WARNING even in DEBUG runs
    for name in ('scipy', 'numpy'):
        logging.getLogger(name).setLevel(max(log_level, logging.WARNING))
    return root
