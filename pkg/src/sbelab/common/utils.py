"""
Common utilities shared by every sbelab component
"""
import hashlib
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from pythonjsonlogger import jsonlogger

from sbelab.common.config import get_settings


def get_logger(name: str) -> logging.Logger:
    """
    Get a JSON-formatted logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(get_settings().log_level.upper())

    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = jsonlogger.JsonFormatter(
            '%(asctime)s %(name)s %(levelname)s %(message)s'
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.propagate = False

    return logger


def sha256_file(path: Path) -> str:
    """
    Checksum of a file on disk (used by the run manifest)
    """
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def stable_hash(text: str) -> int:
    """
    Process-independent 32-bit hash of a string (seeding keys)
    """
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


def summarize_for_logging(data: Dict[str, Any]) -> Dict[str, Any]:
    """
    Replace array payloads by small summaries before logging
    """
    summarized = {}
    for key, value in data.items():
        if isinstance(value, np.ndarray):
            summarized[key] = {
                "shape": list(value.shape),
                "dtype": str(value.dtype),
                "norm": float(np.linalg.norm(value)) if value.size else 0.0,
            }
        elif isinstance(value, (np.floating, np.integer)):
            summarized[key] = value.item()
        elif isinstance(value, Path):
            summarized[key] = str(value)
        else:
            summarized[key] = value

    return summarized


class RunAuditLogger:
    """
    Structured event logger for experiment runs
    """
    def __init__(self, component: str):
        self.component = component
        self.logger = get_logger(f"sbelab.{component}")

    def log_event(
        self,
        run_id: str,
        action: str,
        status: str,
        details: Optional[Dict[str, Any]] = None,
        level: int = logging.INFO,
    ):
        """
        Log a run event; array payloads are summarized
        """
        self.logger.log(
            level,
            action,
            extra={
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "component": self.component,
                "run_id": run_id,
                "action": action,
                "status": status,
                "details": summarize_for_logging(details or {}),
            },
        )
