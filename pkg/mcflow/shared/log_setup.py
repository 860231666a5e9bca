"""
Logging setup shared by the CLI and scripts.
"""
import json
import logging
import os
from typing import Optional

_CONFIGURED = False


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }
        if record.exc_info:
            payload['exc_info'] = self.formatException(record.exc_info)
        return json.dumps(payload, sort_keys=True)


def setup_logging(level: Optional[str] = None, fmt: str = 'json') -> None:
    """
    Configure the root logger once.

    Args:
        level: Logging level name; LOG_LEVEL from the environment wins
        fmt: 'json' or 'plain'
    """
    global _CONFIGURED
    resolved = (os.getenv('LOG_LEVEL') or level or 'INFO').upper()

    root = logging.getLogger()
    root.setLevel(resolved)
    if _CONFIGURED:
        return

    handler = logging.StreamHandler()
    if fmt == 'json':
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    root.addHandler(handler)
    _CONFIGURED = True
