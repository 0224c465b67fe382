"""
Shared Utilities
================
Error types, logging setup and configuration fingerprints used across
the MOP toolkit.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional


class MopError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class InvalidArgumentError(MopError, ValueError):
    """Bad shapes, bounds, counts, configs or paths."""

    exit_code = 2


class FormatError(InvalidArgumentError):
    """Corrupted, wrong-magic or wrong-version binary / JSON files."""


class NotFoundError(MopError, KeyError):
    """A requested descriptor (or other keyed item) does not exist."""

    exit_code = 2

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class ModelMismatchError(MopError):
    """A persisted model or feature file was built with a different config."""

    exit_code = 3


class NumericalError(MopError):
    """Fitting or encoding produced non-finite values."""

    exit_code = 4


LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging for an entry point.

    Args:
        level: Level name; falls back to MOP_LOG_LEVEL, then INFO
    """
    level = level or os.environ.get("MOP_LOG_LEVEL", "INFO")
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format=LOG_FORMAT)


def canonical_json(payload: Any) -> str:
    """JSON with sorted keys and no whitespace variation."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_fingerprint(hyperparameters: Dict[str, Any]) -> str:
    """
    Hash of every hyperparameter that changes model or feature content.

    Args:
        hyperparameters: Plain JSON-serializable mapping

    Returns:
        Hex SHA-256 digest of the canonical JSON form
    """
    return hashlib.sha256(canonical_json(hyperparameters).encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    """Hex SHA-256 of a file's bytes (used in fit reports)."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
