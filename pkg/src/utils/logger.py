# src/utils/logger.py
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Mapping, Optional, Union

from pydantic import ValidationError

from .config import PROJECT_ROOT, LoggingSettings, config
from .errors import ConfigError

# Pillow logs every PNG chunk at DEBUG
_CHATTY = ("PIL",)


def _settings(log_cfg: Union[LoggingSettings, Mapping, None]) -> LoggingSettings:
    if isinstance(log_cfg, LoggingSettings):
        return log_cfg
    try:
        return LoggingSettings(**dict(log_cfg if log_cfg is not None else config.get("logging", {})))
    except ValidationError as exc:
        raise ConfigError(f"logging: {exc}") from exc


def _log_path(file: str) -> Path:
    path = Path(file)
    if not path.is_absolute():
        path = PROJECT_ROOT / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def setup_logging(
    level_override: Optional[str] = None,
    log_cfg: Union[LoggingSettings, Mapping, None] = None,
) -> None:
    """
    Configure the root logger from the `logging` config section: a rotating
    file under logs/ and, unless disabled, a console stream on stderr.
    Called once by the CLI before any command runs.
    """
    settings = _settings(log_cfg)
    level_name = (level_override or settings.level).upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise ConfigError(f"logging.level: unknown level {level_name!r}")

    formatter = logging.Formatter(settings.format)
    handlers: list[logging.Handler] = [
        RotatingFileHandler(_log_path(settings.file), maxBytes=5_000_000, backupCount=3, encoding="utf-8")
    ]
    if settings.console:
        handlers.append(logging.StreamHandler())
    for handler in handlers:
        handler.setFormatter(formatter)

    logging.basicConfig(level=level, handlers=handlers, force=True)
    for name in _CHATTY:
        logging.getLogger(name).setLevel(max(level, logging.INFO))


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
